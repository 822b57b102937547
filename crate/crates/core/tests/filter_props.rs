use proptest::prelude::*;
use warcflow::filters::{build_stage, compose, FilterKind, FilterRunner, FilterSpec, Sample, Stage};
use warcflow::wire::RecordEnvelope;

const MIMES: [&str; 6] = ["image/jpeg", "image/png", "text/html", "text/css", "application/pdf", "IMAGE/JPEG"];

fn stateless_specs() -> Vec<FilterSpec> {
    vec![
        FilterSpec::new(FilterKind::Mime).param("accept", "image/*"),
        FilterSpec::new(FilterKind::Mime).param("accept", "image/jpeg, text/html"),
        FilterSpec::new(FilterKind::Size).param("min_bytes", "10").param("max_bytes", "200"),
        FilterSpec::new(FilterKind::Size).param("max_bytes", "50"),
        FilterSpec::new(FilterKind::UrlPattern).param("regex", "https?://a\\."),
        FilterSpec::new(FilterKind::Custom).param("name", "token_count"),
    ]
}

fn arb_envelope() -> impl Strategy<Value = RecordEnvelope> {
    (0usize..MIMES.len(), prop::sample::select(vec!["http://a.example/x", "https://b.example/y", "ftp://a.c/"]), 0usize..300, any::<u32>())
        .prop_map(|(m, uri, len, id)| {
            RecordEnvelope::record(format!("<urn:{id}>"), uri, MIMES[m], vec![b'x'; len])
        })
}

fn keeps(stage: &dyn Stage, env: &RecordEnvelope) -> bool {
    let mut derived = Default::default();
    matches!(stage.evaluate(env, &mut derived), Ok(warcflow::filters::Decision::Keep))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn accounting_and_composition(
        picks in prop::collection::vec(0usize..6, 0..5),
        envs in prop::collection::vec(arb_envelope(), 0..60),
        with_dedup in any::<bool>(),
    ) {
        let specs = stateless_specs();
        let mut chosen: Vec<FilterSpec> = picks.iter().map(|&i| specs[i].clone()).collect();
        if with_dedup {
            chosen.push(FilterSpec::new(FilterKind::Dedup).param("mode", "exact"));
        }
        let singles: Vec<Box<dyn Stage>> = picks.iter().map(|&i| build_stage(&specs[i]).unwrap()).collect();
        let chain = compose(chosen.iter().map(|s| build_stage(s).unwrap()).collect());
        let mut runner = FilterRunner::new(Box::new(chain));

        let mut seen = std::collections::HashSet::new();
        let mut kept = 0u64;
        for env in &envs {
            let every = singles.iter().all(|s| keeps(s.as_ref(), env));
            let expect = every && (!with_dedup || seen.insert(env.payload().to_vec()));
            let got = runner.run(Sample::new(env.clone())).is_some();
            prop_assert_eq!(got, expect);
            kept += got as u64;
        }
        let stats = runner.stats();
        prop_assert!(stats.is_balanced());
        prop_assert_eq!(stats.input, envs.len() as u64);
        prop_assert_eq!(stats.kept, kept);
    }

    #[test]
    fn mime_matching_oracle(m in 0usize..MIMES.len(), accept in prop::sample::select(vec!["image/*", "*/*", "text/html", "image/jpeg"])) {
        let stage = build_stage(&FilterSpec::new(FilterKind::Mime).param("accept", accept)).unwrap();
        let env = RecordEnvelope::record("<r>", "http://a/", MIMES[m], Vec::new());
        let mime = MIMES[m].to_ascii_lowercase();
        let want = match accept.split_once("/*") {
            Some(("*", _)) => true,
            Some((major, _)) => mime.split('/').next() == Some(major),
            None => mime == accept,
        };
        prop_assert_eq!(keeps(stage.as_ref(), &env), want);
    }

    #[test]
    fn size_bounds_inclusive(len in 0usize..120, lo in 0usize..60, span in 0usize..60) {
        let hi = lo + span;
        let spec = FilterSpec::new(FilterKind::Size).param("min_bytes", lo.to_string()).param("max_bytes", hi.to_string());
        let stage = build_stage(&spec).unwrap();
        let env = RecordEnvelope::record("<r>", "http://a/", "x/y", vec![0; len]);
        prop_assert_eq!(keeps(stage.as_ref(), &env), lo <= len && len <= hi);
    }
}
