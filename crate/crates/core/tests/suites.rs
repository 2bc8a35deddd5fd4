use nalgebra::DVector;
use torbit_core::cone::{ConeSpec, HomologyClass};
use torbit_core::critical::NewtonOptions;
use torbit_core::model::{Blocks, ModelParams};
use torbit_core::profile::{ProfileEvaluator, DEFAULT_EPS_S};
use torbit_core::suites::{lemma_sweep, model_suite, morse_bott_suite, profile_suite, SuiteReport};

fn evaluator() -> ProfileEvaluator {
    let cone = ConeSpec::arnold(DVector::from_vec(vec![2.0, 0.0]), 100.0).unwrap();
    let blocks = Blocks::new(ModelParams::default()).unwrap();
    ProfileEvaluator::new(cone, blocks, 3.0, DEFAULT_EPS_S).unwrap()
}

fn assert_passed(r: &SuiteReport) {
    assert!(r.passed, "{:?}", r.first_failure());
}

#[test]
fn model_suite_passes() {
    let ev = evaluator();
    assert_passed(&model_suite(&ev.blocks, 1).unwrap());
}

#[test]
fn profile_suite_passes() {
    assert_passed(&profile_suite(&evaluator(), 2).unwrap());
}

#[test]
fn morse_bott_suite_passes() {
    let ev = evaluator();
    let alpha = HomologyClass::new(vec![1, 0]).unwrap();
    let reports = lemma_sweep(&ev, &alpha, &[-3.0, 0.5, 5.0], &NewtonOptions::default()).unwrap();
    assert!(reports.iter().all(|r| r.all_ok()));
    assert_passed(&morse_bott_suite(&ev, &reports, 3).unwrap());
}
