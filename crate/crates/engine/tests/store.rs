mod common;

use std::sync::Arc;

use autograde::store::{Store, StoreError};
use autograde_core::{ChainOutcome, QaStatus};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::records::random_record;

#[test]
fn round_trip_through_reopen() {
    let tmp = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let records: Vec<_> = (0..25).map(|i| random_record(&mut rng, &format!("r{i}"))).collect();
    {
        let store = Store::open(tmp.path()).unwrap();
        for r in &records {
            assert_eq!(store.persist_record(r).unwrap(), 1);
        }
    }
    let store = Store::open(tmp.path()).unwrap();
    for r in &records {
        let id = &r.submission.submission_id;
        assert_eq!(&store.load_record(id).unwrap(), r);
        assert_eq!(&store.read_current_file(id).unwrap(), r);
    }
    assert_eq!(store.records().len(), 25);
}

#[test]
fn missing_and_invalid_ids() {
    let tmp = tempfile::tempdir().unwrap();
    let store = Store::open(tmp.path()).unwrap();
    assert!(matches!(store.load_record("nobody"), Err(StoreError::NotFound(_))));
    assert!(matches!(store.history("nobody"), Err(StoreError::NotFound(_))));
    assert!(matches!(store.load_chain("nobody"), Err(StoreError::NotFound(_))));
    assert!(matches!(store.read_current_file("../etc"), Err(StoreError::InvalidId(_))));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let bad = random_record(&mut rng, "a/b");
    assert!(matches!(store.persist_record(&bad), Err(StoreError::InvalidId(_))));
    let r = store.update("nobody", |r| Ok::<_, ()>(r.clone()));
    assert!(matches!(r, Err(StoreError::NotFound(_))));
}

#[test]
fn versions_and_compare_and_swap() {
    let tmp = tempfile::tempdir().unwrap();
    let store = Store::open(tmp.path()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = random_record(&mut rng, "x");
    assert_eq!(store.compare_and_swap(0, &a).unwrap(), 1);
    let mut b = a.clone();
    b.total_awarded = 0.5;
    assert!(matches!(store.compare_and_swap(0, &b), Err(StoreError::Conflict { expected: 0, found: 1, .. })));
    assert_eq!(store.compare_and_swap(1, &b).unwrap(), 2);
    let v = store.update("x", |r| Ok::<_, ()>(r.clone())).unwrap().unwrap();
    assert_eq!(v.version, 2, "no-op update must not add a version");
    assert_eq!(store.history("x").unwrap(), vec![a, b.clone()]);
    assert_eq!(store.update("x", |_| Err("nope")).unwrap(), Err("nope"));
    assert_eq!(store.load_record("x").unwrap(), b);
}

#[test]
fn concurrent_updates_are_serialised() {
    let tmp = tempfile::tempdir().unwrap();
    let store = Arc::new(Store::open(tmp.path()).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut base = random_record(&mut rng, "c");
    base.flag_reasons.clear();
    base.qa_status = QaStatus::Completed;
    store.persist_record(&base).unwrap();
    let threads: Vec<_> = (0..8)
        .map(|t| {
            let store = store.clone();
            std::thread::spawn(move || {
                for i in 0..25 {
                    store
                        .update("c", |r| {
                            let mut n = r.clone();
                            n.flag_reasons.push(format!("t{t}-{i}"));
                            Ok::<_, ()>(n)
                        })
                        .unwrap()
                        .unwrap();
                }
            })
        })
        .collect();
    for t in threads {
        t.join().unwrap();
    }
    let last = store.load_versioned("c").unwrap();
    assert_eq!(last.version, 201);
    assert_eq!(last.record.flag_reasons.len(), 200);
    drop(store);
    let reopened = Store::open(tmp.path()).unwrap();
    assert_eq!(reopened.load_versioned("c").unwrap(), last);
}

#[test]
fn torn_journal_tail_is_dropped() {
    use std::io::Write;
    let tmp = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = random_record(&mut rng, "t1");
    {
        let store = Store::open(tmp.path()).unwrap();
        store.persist_record(&a).unwrap();
    }
    let journal = tmp.path().join("records/journal.jsonl");
    std::fs::OpenOptions::new().append(true).open(&journal).unwrap().write_all(b"{\"version\":2,\"rec").unwrap();
    let b = random_record(&mut rng, "t2");
    {
        let store = Store::open(tmp.path()).unwrap();
        assert_eq!(store.load_record("t1").unwrap(), a);
        store.persist_record(&b).unwrap();
    }
    let store = Store::open(tmp.path()).unwrap();
    assert_eq!(store.load_record("t2").unwrap(), b);
    assert_eq!(store.history("t1").unwrap().len(), 1);
}

#[test]
fn side_files() {
    let tmp = tempfile::tempdir().unwrap();
    let store = Store::open(tmp.path()).unwrap();
    let p1 = store.store_notebook("n", b"{}").unwrap();
    let p2 = store.store_notebook("n", b"{}").unwrap();
    assert_eq!(p1, p2);
    assert!(p1.file_name().unwrap().to_str().unwrap().starts_with("44136fa355b3678a"));
    let chain = ChainOutcome::empty();
    store.store_chain("n", &chain).unwrap();
    assert_eq!(store.load_chain("n").unwrap(), chain);
    let up = store.store_upload(b"student_id,score\na,1\n").unwrap();
    assert_eq!(store.load_upload(&up).unwrap(), b"student_id,score\na,1\n");
    assert!(matches!(store.load_upload("missing"), Err(StoreError::NotFound(_))));
    let d1 = store.intake_dir("n").unwrap();
    let d2 = store.intake_dir("n").unwrap();
    assert!(d1.is_dir() && d1 != d2);
}
