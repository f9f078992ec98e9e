mod common;

use std::sync::Arc;
use std::time::Duration;

use autograde::jobs::JobState;
use autograde::orchestrator::{process_batch, Engine, EngineError};
use autograde_core::{ModuleStatus, QaStatus};
use common::cohort::{self, Variant};

#[test]
fn perfect_submission_completes() {
    let tmp = tempfile::tempdir().unwrap();
    let sref = cohort::write_submission(&tmp.path().join("in"), "good", &Variant::default());
    let engine = Engine::start(common::config(tmp.path(), common::mock(), 1), vec![common::rubric()]).unwrap();
    let batch = engine.run_batch(&[sref]).unwrap();
    assert_eq!(batch.counts.completed, 1, "{:?}", batch.jobs);
    let rec = engine.store().load_record("good").unwrap();
    assert_eq!(rec.qa_status, QaStatus::Completed, "{:?}", rec.flag_reasons);
    assert!((rec.total_awarded - 89.5).abs() < 1e-9, "{}", rec.total_awarded);
    assert_eq!(rec.exposed_score(), rec.total_awarded);
    let report = engine.report("good").unwrap();
    assert!(report.contains("89.50"), "{report}");
}

#[test]
fn bugs_cost_test_points_without_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let v = Variant { bad_normalise: true, even_split: true, ..Variant::default() };
    let sref = cohort::write_submission(&tmp.path().join("in"), "buggy", &v);
    let batch = process_batch(&[sref], &common::rubric(), common::config(tmp.path(), common::mock(), 1)).unwrap();
    assert_eq!(batch.counts.completed, 1);
    let store = autograde::store::Store::open(tmp.path().join("storage")).unwrap();
    let rec = store.load_record("buggy").unwrap();
    let get = |id: &str| rec.module_results.iter().find(|r| r.module_id == id).unwrap().clone();
    assert_eq!(get("p1_data_normalisation").awarded_points, 0.0);
    // One of three optimizer tests depends on the split ratio.
    assert!((get("p2_optimization_implementation").awarded_points - 4.0).abs() < 1e-9);
    assert!((rec.total_awarded - (89.5 - 3.0 - 2.0)).abs() < 1e-9);
}

#[test]
fn malformed_and_syntax_error_are_flagged() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    let bad_json = cohort::write_raw(&input, "badjson", b"{not json");
    let syntax = cohort::write_submission(&input, "syntax", &Variant { syntax_error: true, ..Variant::default() });
    let unreliable = cohort::write_submission(&input, "unrel", &Variant { unreliable: true, ..Variant::default() });
    let engine = Engine::start(common::config(tmp.path(), common::mock(), 2), vec![common::rubric()]).unwrap();
    let batch = engine.run_batch(&[bad_json, syntax, unreliable]).unwrap();
    assert_eq!(batch.counts.flagged, 3, "{:?}", batch.jobs);
    for id in ["badjson", "syntax", "unrel"] {
        let rec = engine.store().load_record(id).unwrap();
        assert!(rec.awaiting_review());
        assert_eq!(rec.exposed_score(), 0.0);
        assert!(!rec.flag_reasons.is_empty());
    }
    let syn = engine.store().load_record("syntax").unwrap();
    assert!(syn.flag_reasons.iter().any(|f| f.contains("syntax")), "{:?}", syn.flag_reasons);
    assert!(syn
        .module_results
        .iter()
        .filter(|r| r.module_id.starts_with("p2_wave"))
        .all(|r| r.status == ModuleStatus::Failed));
    let q: Vec<String> = engine.review_queue().into_iter().map(|r| r.submission.submission_id).collect();
    assert_eq!(q.len(), 3);
}

#[test]
fn worker_count_bounds_sandbox_concurrency() {
    let tmp = tempfile::tempdir().unwrap();
    let (refs, _) = cohort::cohort(&tmp.path().join("in"), 8, &[], 7);
    let cfg = common::config(tmp.path(), common::mock(), 3);
    let gauge = cfg.sandbox.gauge.clone();
    let batch = process_batch(&refs, &common::rubric(), cfg).unwrap();
    assert_eq!(batch.counts.completed, 8);
    assert!(gauge.peak() <= 3, "peak {}", gauge.peak());
    assert!(gauge.peak() >= 2, "pool never overlapped: peak {}", gauge.peak());
    assert!(gauge.runs() >= 8 * 9);
}

#[test]
fn rejects_bad_input_before_queueing() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(matches!(
        Engine::start(common::config(tmp.path(), common::mock(), 0), vec![]),
        Err(EngineError::ZeroParallelism)
    ));
    let engine = Engine::start(common::config(tmp.path(), common::mock(), 1), vec![common::rubric()]).unwrap();
    let mut sref = cohort::write_submission(&tmp.path().join("in"), "ok", &Variant::default());
    sref.assignment_id = "other".into();
    assert!(matches!(engine.submit(sref.clone()), Err(EngineError::UnknownAssignment(_))));
    sref.assignment_id = "assignment3".into();
    sref.submission_id = "../x".into();
    assert!(matches!(engine.submit(sref), Err(EngineError::InvalidSubmissionId(_))));
}

#[test]
fn unfinished_jobs_resume_after_restart() {
    let tmp = tempfile::tempdir().unwrap();
    let sref = cohort::write_submission(&tmp.path().join("in"), "later", &Variant::default());
    // A journal entry for a job that never ran, as left by a crash.
    let job_id = {
        let mut book = autograde::jobs::JobBook::open(&tmp.path().join("storage/jobs.jsonl")).unwrap();
        book.enqueue(sref, None, autograde_core::Timestamp(1)).unwrap().job_id
    };
    let engine = Engine::start(common::config(tmp.path(), common::mock(), 1), vec![common::rubric()]).unwrap();
    let done = engine.wait(std::slice::from_ref(&job_id), Some(Duration::from_secs(60))).unwrap();
    assert_eq!(done[0].state, JobState::Completed);
    assert!(engine.store().load_record("later").is_ok());
    drop(engine);
    let engine = Engine::start(common::config(tmp.path(), common::mock(), 1), vec![common::rubric()]).unwrap();
    assert_eq!(engine.job(&job_id).unwrap().state, JobState::Completed);
    assert_eq!(engine.store().history("later").unwrap().len(), 1);
}

#[test]
fn panicking_backend_becomes_operator_failure() {
    struct Boom;
    impl autograde::backend::Backend for Boom {
        fn complete(&self, _: &str, _: u32) -> Result<String, autograde::backend::BackendError> {
            panic!("backend exploded")
        }
        fn name(&self) -> &'static str {
            "boom"
        }
    }
    let tmp = tempfile::tempdir().unwrap();
    let sref = cohort::write_submission(&tmp.path().join("in"), "p", &Variant::default());
    let other = cohort::write_submission(&tmp.path().join("in"), "q", &Variant::default());
    let engine = Engine::start(common::config(tmp.path(), Arc::new(Boom), 1), vec![common::rubric()]).unwrap();
    let batch = engine.run_batch(&[sref, other]).unwrap();
    assert_eq!(batch.counts.failed_operator, 2);
    assert!(batch.jobs[0].error_detail.as_deref().unwrap().contains("backend exploded"));
}
