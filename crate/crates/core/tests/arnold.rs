use nalgebra::DVector;
use torbit_core::cone::{ConeSpec, HomologyClass};
use torbit_core::dynamics::{ComposedHamiltonian, MechanicalSystem, SigmaProfile};
use torbit_core::model::{Blocks, ModelParams};
use torbit_core::orbits::{cutoff_leak_check, dense_scan, period_map_check, OrbitOptions};

const WINDOWS: [(f64, f64); 3] = [(0.2, 0.3), (0.45, 0.55), (0.9, 1.0)];

#[test]
fn every_seeded_class_closes_in_every_window() {
    let sys = MechanicalSystem::arnold(0.05);
    let opts = OrbitOptions::default();
    let cone = ConeSpec::arnold(DVector::from_vec(vec![2.0, 0.0]), 100.0).unwrap();
    let blocks = Blocks::new(ModelParams::default()).unwrap();
    for a in [[1, 0], [2, 1], [2, -1], [3, 1]] {
        let alpha = HomologyClass::new(a.to_vec()).unwrap();
        let scan = dense_scan(&sys, &alpha, &WINDOWS, &opts).unwrap();
        assert!(scan.unresolved.is_empty(), "{:?}", scan.unresolved);
        assert_eq!(scan.records.len(), 3);
        let c = cone.pairing(&alpha);
        for rec in &scan.records {
            assert!(rec.certificate.as_ref().unwrap().passed);
            let [lo, hi] = rec.window.unwrap();
            let f = ComposedHamiltonian::new(
                sys.clone(),
                SigmaProfile::new(lo, hi, c).unwrap(),
                cone.clone(),
                blocks.clone(),
            )
            .unwrap();
            let pm = period_map_check(&f, rec, &opts).unwrap();
            assert!(pm.passed);
        }
    }
}

#[test]
fn leak_check() {
    let sys = MechanicalSystem::arnold(0.05);
    let cone = ConeSpec::arnold(DVector::from_vec(vec![2.0, 0.0]), 100.0).unwrap();
    let blocks = Blocks::new(ModelParams::default()).unwrap();
    let f = ComposedHamiltonian::new(sys, SigmaProfile::new(0.9, 1.0, 2.0).unwrap(), cone, blocks)
        .unwrap();
    let r = cutoff_leak_check(&f, &HomologyClass::new(vec![1, 0]).unwrap(), 10_000, 7).unwrap();
    assert!(r.passed);
}
