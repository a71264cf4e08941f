//! Content cache: one adapter call per distinct versioned key, whatever the
//! access pattern.

mod support;

use std::collections::BTreeMap;

use proptest::prelude::*;
use scram_core::url::{Fetcher, ResourceUrl, SchemeRegistry};
use support::StubScheme;

fn stub_with_keys(n: usize) -> StubScheme {
    let stub = StubScheme::new();
    for i in 0..n {
        stub.insert(
            &format!("m{i}"),
            format!("<doc type=T version=1.0>\nbody of module {i}\n"),
        );
    }
    stub
}

fn fetcher(stub: &StubScheme, cache: &std::path::Path) -> Fetcher {
    let mut schemes = SchemeRegistry::new();
    schemes.register("stub", stub.clone()).unwrap();
    Fetcher::new(schemes, cache)
}

/// Deterministic xorshift so the access order is irregular but repeatable.
fn access_order(n: usize, keys: usize) -> Vec<usize> {
    let mut state = 0x2545_f491_4f6c_dd1du64;
    (0..n)
        .map(|i| {
            if i < keys {
                return i;
            }
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % keys as u64) as usize
        })
        .collect()
}

#[test]
fn thousand_fetches_over_fifty_keys_hit_adapters_fifty_times() {
    let dir = tempfile::tempdir().unwrap();
    let stub = stub_with_keys(50);
    let f = fetcher(&stub, dir.path());
    let mut seen: BTreeMap<usize, Vec<u8>> = BTreeMap::new();
    for k in access_order(1000, 50) {
        let url = ResourceUrl::parse(&format!("stub:?module=m{k}"), None).unwrap();
        let (bytes, _) = f.fetch(&url, Some(&format!("v{k}"))).unwrap();
        let first = seen.entry(k).or_insert_with(|| bytes.clone());
        assert_eq!(*first, bytes, "key {k} changed content");
    }
    assert_eq!(f.fetch_calls(), 1000);
    assert_eq!(stub.calls(), 50);
    assert_eq!(f.adapter_invocations(), 50);

    // a fresh fetcher over the same cache directory needs no adapter at all
    let again = fetcher(&stub, dir.path());
    for k in 0..50 {
        let url = ResourceUrl::parse(&format!("stub:?module=m{k}"), None).unwrap();
        assert_eq!(
            again.fetch(&url, Some(&format!("v{k}"))).unwrap().0,
            seen[&k]
        );
    }
    assert_eq!(stub.calls(), 50);
}

#[test]
fn concurrent_readers_share_entries() {
    let dir = tempfile::tempdir().unwrap();
    let stub = stub_with_keys(10);
    let f = fetcher(&stub, dir.path());
    std::thread::scope(|s| {
        for t in 0..8 {
            let f = &f;
            s.spawn(move || {
                for i in 0..50 {
                    let k = (i * 7 + t) % 10;
                    let url = ResourceUrl::parse(&format!("stub:?module=m{k}"), None).unwrap();
                    f.fetch(&url, Some("1.0")).unwrap();
                }
            });
        }
    });
    assert_eq!(stub.calls(), 10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn adapter_calls_equal_distinct_keys(accesses in prop::collection::vec((0usize..12, 0usize..3), 1..120)) {
        let dir = tempfile::tempdir().unwrap();
        let stub = stub_with_keys(12);
        let f = fetcher(&stub, dir.path());
        for (k, v) in &accesses {
            let url = ResourceUrl::parse(&format!("stub:?module=m{k}&version=r{v}"), None).unwrap();
            f.fetch(&url, None).unwrap();
        }
        let distinct: std::collections::BTreeSet<_> = accesses.iter().collect();
        prop_assert_eq!(stub.calls(), distinct.len());
    }
}
