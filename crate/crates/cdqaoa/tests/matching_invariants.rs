use cdqaoa::agp::NumericAlpha;
use cdqaoa::expand::Orders;
use cdqaoa::matching::{derive_angles, reverse_protocol, AngleSet, MatchConfig, MatchReport};
use cdqaoa::model::{ProblemInstance, TwoLevelNorm};
use cdqaoa::schedule::{Profile, ProfileRegistry, ScheduleShape};

fn derive(inst: &ProblemInstance, shape: &ScheduleShape, p: usize) -> MatchReport {
    let alpha = NumericAlpha::new(inst).unwrap();
    derive_angles(inst, shape, p, Orders::default(), &alpha, &MatchConfig::default()).unwrap()
}

fn assert_tiling(a: &AngleSet) {
    assert!(a.taus.iter().all(|&t| t > 0.0), "taus {:?}", a.taus);
    let sum: f64 = a.taus.iter().sum();
    assert!((sum - a.equivalent_t).abs() < 1e-12 * sum);
}

fn max_jump(v: &[f64]) -> f64 {
    v.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max)
}

fn mean_jump(v: &[f64]) -> f64 {
    v.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (v.len() - 1) as f64
}

fn sup_distance(a: &dyn Profile, b: &dyn Profile) -> f64 {
    (0..=200).map(|k| k as f64 / 200.0).map(|u| (a.value(u) - b.value(u)).abs()).fold(0.0, f64::max)
}

#[test]
fn derived_angles_are_smooth_for_linear_ramps() {
    let inst = ProblemInstance::ising_ring(8).unwrap();
    for p in [8, 12] {
        let r = derive(&inst, &ScheduleShape::linear(), p);
        assert_tiling(&r.angles);
        for v in [&r.angles.gammas, &r.angles.betas] {
            assert!(max_jump(v) <= 3.0 * mean_jump(v), "p = {p}: {v:?}");
        }
    }
}

#[test]
fn round_trip_recovers_linear_ramp() {
    let cases = [
        (ProblemInstance::two_level(TwoLevelNorm::Ising).unwrap(), 4),
        (ProblemInstance::two_level(TwoLevelNorm::Ising).unwrap(), 8),
        (ProblemInstance::ising_ring(8).unwrap(), 8),
    ];
    let linear = ScheduleShape::linear();
    let reg = ProfileRegistry::default();
    for (inst, p) in cases {
        let alpha = NumericAlpha::new(&inst).unwrap();
        let fwd = derive(&inst, &linear, p);
        let rev = reverse_protocol(&inst, &fwd.angles.gammas, &fwd.angles.betas, Orders::default(), &alpha, &MatchConfig::default())
            .unwrap();
        assert_tiling(&rev.angles);
        let shape = rev.schedule.shape(&reg).unwrap();
        let name = inst.name();
        assert!(sup_distance(shape.lambda.as_ref(), linear.lambda.as_ref()) <= 0.02, "{name} p = {p}");
        assert!(sup_distance(shape.s.as_ref(), linear.s.as_ref()) <= 0.02, "{name} p = {p}");
        let again = derive(&inst, &shape, p);
        for (x, y) in fwd.angles.flat().iter().zip(again.angles.flat()) {
            assert!((x - y).abs() < 1e-2, "{name} p = {p}: {x} vs {y}");
        }
    }
}

#[test]
fn lowest_order_reverse_keeps_gamma_plus_beta() {
    let inst = ProblemInstance::ising_ring(6).unwrap();
    let alpha = NumericAlpha::new(&inst).unwrap();
    let cfg = MatchConfig { reverse_iterations: 0, ..MatchConfig::default() };
    let (g, b) = ([0.1, 0.2, 0.3], [0.3, 0.2, 0.1]);
    let rev = reverse_protocol(&inst, &g, &b, Orders::default(), &alpha, &cfg).unwrap();
    assert_tiling(&rev.angles);
    for q in 0..3 {
        assert!((rev.angles.taus[q] - (g[q] + b[q])).abs() < 1e-12);
    }
    assert!((rev.angles.equivalent_t - 1.2).abs() < 1e-12);
    // Symmetric angles imply lambda = 1/2 at the middle of the middle step.
    let sched = rev.schedule.build(&ProfileRegistry::default()).unwrap();
    assert!((sched.lambda(0.6) - 0.5).abs() < 1e-9);
}

#[test]
fn non_smooth_input_warns() {
    let inst = ProblemInstance::ising_ring(6).unwrap();
    let alpha = NumericAlpha::new(&inst).unwrap();
    let cfg = MatchConfig { reverse_iterations: 0, ..MatchConfig::default() };
    let rev = reverse_protocol(&inst, &[0.1, 0.9, 0.2], &[0.3, 0.2, 0.1], Orders::default(), &alpha, &cfg).unwrap();
    assert!(rev.warnings.iter().any(|w| w.contains("not smooth")));
    assert!(rev.warnings.iter().any(|w| w.contains("not monotone")));
}

#[test]
fn sine_drive_lengthens_the_protocol() {
    let inst = ProblemInstance::ising_ring(8).unwrap();
    let plain = derive(&inst, &ScheduleShape::linear(), 4);
    let driven = derive(&inst, &ScheduleShape::linear_sine(-0.05), 4);
    assert_tiling(&driven.angles);
    assert!(driven.angles.equivalent_t > plain.angles.equivalent_t);
}
