use proptest::prelude::*;
use warcflow::consumer::{Interleaver, Poll};

/// Stream ids of every draw until exhaustion.
fn draw_all(inter: &mut Interleaver<u32>) -> Vec<u64> {
    let mut draws = Vec::new();
    loop {
        match inter.interleave_next() {
            Poll::Ready { stream, .. } => draws.push(stream),
            Poll::Pending => panic!("pending with all streams ended"),
            Poll::StreamsExhausted => return draws,
        }
    }
}

fn windows_balanced(draws: &[u64], streams: &[u64], width: usize) -> bool {
    draws.windows(width).all(|w| {
        let counts: Vec<usize> = streams.iter().map(|s| w.iter().filter(|d| *d == s).count()).collect();
        counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1
    })
}

#[test]
fn four_backlogged_streams() {
    let mut inter = Interleaver::new(4);
    let ids = [10u64, 11, 12, 13];
    for &id in &ids {
        inter.add_stream(id);
        for i in 0..100 {
            inter.push(id, i).unwrap();
        }
        inter.end(id);
    }
    let draws = draw_all(&mut inter);
    assert_eq!(draws.len(), 400);
    assert!(windows_balanced(&draws, &ids, 40));
    assert!(inter.draw_counts().iter().all(|&(_, n)| n == 100));
}

#[test]
fn items_keep_stream_order() {
    let mut inter = Interleaver::new(2);
    inter.add_stream(0);
    inter.add_stream(1);
    for i in 0..5 {
        inter.push(0, i);
        inter.push(1, 100 + i);
    }
    let mut per = [Vec::new(), Vec::new()];
    inter.end(0);
    inter.end(1);
    while let Poll::Ready { stream, item } = inter.interleave_next() {
        per[stream as usize].push(item);
    }
    assert_eq!(per[0], [0, 1, 2, 3, 4]);
    assert_eq!(per[1], [100, 101, 102, 103, 104]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// While every stream stays backlogged, any window of draws is balanced.
    #[test]
    fn backlogged_windows_balanced(n in 1usize..8, depth in 1usize..60, width in 1usize..50) {
        let mut inter = Interleaver::new(n);
        let ids: Vec<u64> = (0..n as u64).collect();
        for &id in &ids {
            inter.add_stream(id);
            for i in 0..depth {
                inter.push(id, i as u32);
            }
            inter.end(id);
        }
        let draws = draw_all(&mut inter);
        prop_assert_eq!(draws.len(), n * depth);
        prop_assert!(windows_balanced(&draws, &ids, width.min(draws.len())));
    }

    /// Uneven queues: no item is lost or duplicated.
    #[test]
    fn conservation(depths in prop::collection::vec(0usize..30, 1..6)) {
        let mut inter = Interleaver::new(depths.len());
        for (id, &d) in depths.iter().enumerate() {
            inter.add_stream(id as u64);
            for i in 0..d {
                inter.push(id as u64, i as u32);
            }
            inter.end(id as u64);
        }
        let draws = draw_all(&mut inter);
        for (id, &d) in depths.iter().enumerate() {
            prop_assert_eq!(draws.iter().filter(|&&s| s == id as u64).count(), d);
        }
    }
}
