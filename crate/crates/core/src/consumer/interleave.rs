use std::collections::VecDeque;

use crate::wire::RecordEnvelope;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Poll<T = RecordEnvelope> {
    Ready { stream: u64, item: T },
    /// Nothing queued, but some stream is still open or expected.
    Pending,
    StreamsExhausted,
}

#[derive(Debug)]
struct Stream<T> {
    id: u64,
    queue: VecDeque<T>,
    ended: bool,
    drawn: u64,
}

/// Round-robin merge of per-connection queues.
#[derive(Debug)]
pub struct Interleaver<T = RecordEnvelope> {
    streams: Vec<Stream<T>>,
    cursor: usize,
    expected: usize,
    retired: Vec<(u64, u64)>,
}

impl<T> Default for Interleaver<T> {
    fn default() -> Self {
        Self::new(0)
    }
}

impl<T> Interleaver<T> {
    /// `expected` streams have yet to be added; until they are, an empty
    /// interleaver is `Pending` rather than exhausted.
    pub fn new(expected: usize) -> Self {
        Self {
            streams: Vec::new(),
            cursor: 0,
            expected,
            retired: Vec::new(),
        }
    }

    pub fn add_stream(&mut self, id: u64) {
        self.expected = self.expected.saturating_sub(1);
        self.streams.push(Stream {
            id,
            queue: VecDeque::new(),
            ended: false,
            drawn: 0,
        });
    }

    /// Stops waiting for streams that were expected but never added.
    pub fn close_expected(&mut self) {
        self.expected = 0;
    }

    fn stream_mut(&mut self, id: u64) -> Option<&mut Stream<T>> {
        self.streams.iter_mut().find(|s| s.id == id)
    }

    /// Appends to a stream's queue; returns the new depth, or `None` for an
    /// unknown or ended stream.
    pub fn push(&mut self, id: u64, item: T) -> Option<usize> {
        let s = self.stream_mut(id).filter(|s| !s.ended)?;
        s.queue.push_back(item);
        Some(s.queue.len())
    }

    /// Marks the end of a stream; it is removed once drained.
    pub fn end(&mut self, id: u64) {
        if let Some(s) = self.stream_mut(id) {
            s.ended = true;
        }
    }

    pub fn queue_len(&self, id: u64) -> usize {
        self.streams
            .iter()
            .find(|s| s.id == id)
            .map_or(0, |s| s.queue.len())
    }

    pub fn active_streams(&self) -> usize {
        self.streams.len()
    }

    /// Samples drawn per stream id, including retired streams.
    pub fn draw_counts(&self) -> Vec<(u64, u64)> {
        let mut v = self.retired.clone();
        v.extend(self.streams.iter().map(|s| (s.id, s.drawn)));
        v.sort_unstable();
        v
    }

    fn retire_drained(&mut self) {
        let mut i = 0;
        while i < self.streams.len() {
            if self.streams[i].ended && self.streams[i].queue.is_empty() {
                let s = self.streams.remove(i);
                self.retired.push((s.id, s.drawn));
                if i < self.cursor {
                    self.cursor -= 1;
                }
            } else {
                i += 1;
            }
        }
        if self.cursor >= self.streams.len() {
            self.cursor = 0;
        }
    }

    /// Head of the first nonempty queue at or after the cursor; the cursor
    /// moves past the stream drawn from.
    pub fn interleave_next(&mut self) -> Poll<T> {
        self.retire_drained();
        let n = self.streams.len();
        for off in 0..n {
            let i = (self.cursor + off) % n;
            if let Some(item) = self.streams[i].queue.pop_front() {
                self.streams[i].drawn += 1;
                self.cursor = (i + 1) % n;
                return Poll::Ready {
                    stream: self.streams[i].id,
                    item,
                };
            }
        }
        if n == 0 && self.expected == 0 {
            Poll::StreamsExhausted
        } else {
            Poll::Pending
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feed(streams: &[&[&'static str]]) -> Interleaver<&'static str> {
        let mut il = Interleaver::new(streams.len());
        for (id, items) in streams.iter().enumerate() {
            il.add_stream(id as u64);
            for item in *items {
                il.push(id as u64, *item);
            }
            il.end(id as u64);
        }
        il
    }

    fn drain(il: &mut Interleaver<&'static str>) -> Vec<&'static str> {
        let mut out = Vec::new();
        while let Poll::Ready { item, .. } = il.interleave_next() {
            out.push(item);
        }
        out
    }

    #[test]
    fn round_robin_example() {
        let mut il = feed(&[&["a1", "a2"], &["b1"], &["c1", "c2"]]);
        assert_eq!(drain(&mut il), ["a1", "b1", "c1", "a2", "c2"]);
        assert_eq!(il.interleave_next(), Poll::StreamsExhausted);
    }

    #[test]
    fn single_stream_passthrough() {
        let mut il = feed(&[&["x", "y", "z"]]);
        assert_eq!(drain(&mut il), ["x", "y", "z"]);
    }

    #[test]
    fn open_stream_is_pending() {
        let mut il: Interleaver<u8> = Interleaver::new(2);
        assert_eq!(il.interleave_next(), Poll::Pending);
        il.add_stream(0);
        il.add_stream(1);
        il.push(1, 7);
        assert_eq!(il.interleave_next(), Poll::Ready { stream: 1, item: 7 });
        assert_eq!(il.interleave_next(), Poll::Pending);
        il.end(0);
        il.end(1);
        assert_eq!(il.interleave_next(), Poll::StreamsExhausted);
        assert_eq!(il.draw_counts(), [(0, 0), (1, 1)]);
    }

    #[test]
    fn zero_expected_is_exhausted() {
        let mut il: Interleaver<u8> = Interleaver::new(0);
        assert_eq!(il.interleave_next(), Poll::StreamsExhausted);
    }

    #[test]
    fn push_after_end_is_rejected() {
        let mut il: Interleaver<u8> = Interleaver::new(1);
        il.add_stream(3);
        il.end(3);
        assert_eq!(il.push(3, 1), None);
    }
}
