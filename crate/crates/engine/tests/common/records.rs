//! Random but internally consistent grading records.

use autograde_core::{
    GradingRecord, ModuleResult, ModuleStatus, QaStatus, ResultSource, ReviewAction, ReviewDecision, SubmissionRef,
    Timestamp,
};
use rand::seq::IndexedRandom;
use rand::Rng;

const AWKWARD: [&str; 8] = ["plain", "comma, inside", "quote \" mark", "new\nline", "naïve café", "tab\there", "", ";semi"];

fn text<R: Rng + ?Sized>(rng: &mut R) -> String {
    let n = rng.random_range(1..4);
    (0..n).map(|_| *AWKWARD.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn points<R: Rng + ?Sized>(rng: &mut R, max: f64) -> f64 {
    match rng.random_range(0..4) {
        0 => 0.0,
        1 => max,
        2 => (rng.random_range(0.0..=max) * 2.0).round() / 2.0,
        _ => rng.random_range(0.0..=max),
    }
}

pub fn random_record(rng: &mut impl Rng, id: &str) -> GradingRecord {
    let n = rng.random_range(1..8);
    let mut results = Vec::with_capacity(n);
    for i in 0..n {
        let max = [1.0, 2.5, 4.0, 8.0, 35.0][rng.random_range(0..5)];
        let status = [ModuleStatus::Ok, ModuleStatus::Ok, ModuleStatus::Failed, ModuleStatus::Skipped][rng.random_range(0..4)];
        let awarded = if status == ModuleStatus::Skipped { 0.0 } else { points(rng, max) };
        results.push(ModuleResult {
            module_id: format!("m{i}"),
            source: [ResultSource::Tests, ResultSource::Llm][rng.random_range(0..2)],
            awarded_points: awarded,
            max_points: max,
            detail: text(rng),
            status,
        });
    }
    let total_possible: f64 = results.iter().map(|r| r.max_points).sum();
    let total_awarded: f64 = results.iter().filter(|r| r.status != ModuleStatus::Skipped).map(|r| r.awarded_points).sum();
    let flag_reasons: Vec<String> = results
        .iter()
        .filter(|r| r.status != ModuleStatus::Ok)
        .map(|r| format!("{} {:?}: {}", r.module_id, r.status, r.detail))
        .collect();
    let qa_status = if flag_reasons.is_empty() { QaStatus::Completed } else { QaStatus::Flagged };
    let created = rng.random_range(1_600_000_000_000i64..1_800_000_000_000);
    let decision = |rng: &mut dyn rand::RngCore| -> ReviewDecision {
        let over = rng.random_bool(0.5);
        ReviewDecision {
            reviewer_id: format!("ta{}", rng.random_range(0..5)),
            action: if over { ReviewAction::Override } else { ReviewAction::ApproveComputed },
            override_score: over.then(|| points(rng, total_possible)),
            note: text(rng),
            decided_at: Timestamp(created + rng.random_range(1..1_000_000)),
        }
    };
    let (review, review_history) = if qa_status == QaStatus::Flagged && rng.random_bool(0.5) {
        let r = decision(rng);
        let hist = if rng.random_bool(0.3) { vec![decision(rng), r.clone()] } else { vec![r.clone()] };
        (Some(r), hist)
    } else {
        (None, Vec::new())
    };
    GradingRecord {
        submission: SubmissionRef {
            submission_id: id.into(),
            student_id: format!("stu,{}\"{}", rng.random_range(0..1000), text(rng)),
            source_path: format!("/in/{id}/{id}.ipynb"),
            assignment_id: "assignment3".into(),
        },
        module_results: results,
        total_awarded,
        total_possible,
        qa_status,
        flag_reasons,
        review,
        review_history,
        created_at: Timestamp(created),
        updated_at: Timestamp(created + 5),
    }
}
