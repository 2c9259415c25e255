use kacsim::chaos::*;
use kacsim::limit::*;
use kacsim::measures::{EmpiricalMeasure, NormKind};
use kacsim::metrics::wasserstein;
use kacsim::rng::substream;
use kacsim::stats::{anderson_darling_normal, ks_two_sample, std_normal_cdf, Estimate};
use kacsim::*;

#[test]
fn tensor_gaussian_coordinates_are_normal() {
    let spec = InitialDataSpec::tensor(BaseLaw::gaussian(2, 1.0));
    let mut rng = substream(1, 0, 0);
    let s = sample_initial(&spec, 5000, &mut rng).unwrap();
    assert_eq!(s.velocities.len(), 10_000);
    let (_, p) = anderson_darling_normal(&s.velocities);
    assert!(p > 0.001, "p = {p}");
}

#[test]
fn conditioned_gaussian_matches_kac_sphere() {
    let (n, d) = (10, 3);
    let sphere = InitialDataSpec { base: BaseLaw::gaussian(d, 1.0), mode: InitMode::KacSphere { energy: 1.0 }, project_momentum: false };
    let cond = InitialDataSpec {
        base: BaseLaw::gaussian(d, 1.0),
        mode: InitMode::ConditionedTensor { energy: 1.0, burn_in: 100, thin: 2, trace: 20, step: 1.0 },
        project_momentum: false,
    };
    let draw = |spec: &InitialDataSpec, seed: u64| -> Vec<f64> {
        (0..2000)
            .map(|r| {
                let mut rng = substream(seed, 0, r);
                sample_initial(spec, n, &mut rng).unwrap().velocities[0]
            })
            .collect()
    };
    let (_, p) = ks_two_sample(&draw(&sphere, 2), &draw(&cond, 3));
    assert!(p > 0.01, "p = {p}");
}

#[test]
fn stuck_chain_is_flagged_but_returned() {
    let spec = InitialDataSpec {
        // equal-speed start, far from the conditioned ball law, with tiny moves
        base: BaseLaw::UniformBall { dim: 3, radius: 1.3 },
        mode: InitMode::ConditionedTensor { energy: 1.0, burn_in: 0, thin: 1, trace: 40, step: 0.02 },
        project_momentum: false,
    };
    let mut rng = substream(4, 0, 0);
    let s = sample_initial(&spec, 50, &mut rng).unwrap();
    assert_eq!(s.velocities.len(), 150);
    assert!(s.rhat.unwrap() > 1.1 && s.warning.is_some(), "{:?}", s.rhat);
}

#[test]
fn sobolev_functional_matches_identity() {
    let law = BaseLaw::gaussian(1, 1.0);
    let opts = LlnOptions::new(2000, 5);
    let e = wn_functional(&law, LlnDistance::NegSobolevSquared { s: 0.75 }, 10, &opts).unwrap();
    let exact = e.exact.unwrap();
    assert!((e.mean - exact).abs() <= 3.0 * e.stderr, "{} ± {} vs {exact}", e.mean, e.stderr);
}

#[test]
fn two_point_w1_matches_enumeration() {
    let law = BaseLaw::TwoPoint { a: vec![-1.0], b: vec![1.0] };
    let f0 = law.exact_measure().unwrap();
    // the four equally likely configurations of two particles
    let mut exact = 0.0;
    for x in [-1.0, 1.0] {
        for y in [-1.0, 1.0] {
            let mu = EmpiricalMeasure::uniform(1, vec![x, y]).unwrap();
            exact += 0.25 * wasserstein(&mu, &f0, 1.0).unwrap().value;
        }
    }
    assert!((exact - 0.5).abs() < 1e-15);
    let e = wn_functional(&law, LlnDistance::W1, 2, &LlnOptions::new(4000, 6)).unwrap();
    assert!((e.mean - exact).abs() <= 3.0 * e.stderr, "{e:?}");
}

fn replicas(kernel: &Kernel, base: &BaseLaw, n: usize, reps: usize, t: f64, seed: u64) -> Vec<Vec<f64>> {
    let spec = InitialDataSpec::tensor(base.clone());
    let plan = SimulationPlan { times: vec![t], replicas: reps, seed, selection: Selection::Auto };
    simulate(|_, rng| sample_initial(&spec, n, rng).unwrap().velocities, kernel, &plan)
        .unwrap()
        .into_iter()
        .map(|tr| tr.snapshots.into_iter().next().unwrap())
        .collect()
}

#[test]
fn chaos_gap_against_pooled_replicas_vanishes() {
    let k = Kernel::maxwell(3, 1.0).unwrap();
    let base = BaseLaw::UniformBall { dim: 3, radius: 2.0 };
    let reps = replicas(&k, &base, 20, 200, 1.0, 7);
    let pooled = EmpiricalMeasure::uniform(3, reps.concat()).unwrap();
    let dict = Dictionary::standard(3, NormKind::FourierF, 1);
    let g = chaos_gap(&reps, 3, &pooled, &dict, 1, 50, 8).unwrap();
    assert!(g.value < 1e-12, "{}", g.value);
}

#[test]
fn initial_tensor_data_is_chaotic() {
    let k = Kernel::hard_spheres(3, 1.0).unwrap();
    let base = BaseLaw::UniformBall { dim: 3, radius: 2.0 };
    let n = 20;
    let reps = replicas(&k, &base, n, 1000, 0.0, 9);
    let mut rng = substream(10, 0, 0);
    let reference = EmpiricalMeasure::uniform(3, base.sample(20_000, &mut rng)).unwrap();
    let dict = Dictionary::standard(3, NormKind::Lipschitz, 2);
    let g1 = chaos_gap(&reps, 3, &reference, &dict, 1, 100, 11).unwrap();
    assert!(g1.value <= 3.0 * g1.stderr, "{g1:?}");
    let g2 = chaos_gap(&reps, 3, &reference, &dict, 2, 100, 12).unwrap();
    assert!(g2.value <= 2.0 * 4.0 / n as f64 + 3.0 * g2.stderr, "{} {}", g2.value, g2.stderr);
    assert!(chaos_gap(&reps, 3, &reference, &Dictionary { entries: vec![] }, 1, 10, 1).is_err());
}

#[test]
fn mehler_single_particle_oracle() {
    // N = 1, d = 1: the marginal is ½δ₋₁ + ½δ₁ and W₁ to N(0,1) is E||G| - 1|
    let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let exact = 2.0 * (2.0 * std_normal_cdf(1.0) - 1.5 - phi(0.0) + 2.0 * phi(1.0));
    let rows = mehler_marginal_check(&[1], 1, 1, 10_000, 20, 13).unwrap();
    assert!((rows[0].w1 - exact).abs() <= 3.0 * rows[0].stderr, "{:?} vs {exact}", rows[0]);
}

#[test]
fn kac_sphere_coordinate_moments() {
    let spec = InitialDataSpec { base: BaseLaw::gaussian(1, 1.0), mode: InitMode::KacSphere { energy: 1.0 }, project_momentum: false };
    let xs: Vec<f64> = (0..20_000)
        .map(|r| sample_initial(&spec, 10, &mut substream(14, 0, r)).unwrap().velocities[0])
        .collect();
    let m = Estimate::from_samples(&xs);
    assert!(m.covers(0.0, 3.0));
    let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
    assert!(Estimate::from_samples(&sq).covers(1.0, 3.0));
}

#[test]
fn mehler_table_decreases() {
    let rows = mehler_marginal_check(&[10, 1000], 1, 1, 5000, 20, 15).unwrap();
    assert!(rows[1].w1 + 3.0 * rows[1].stderr < rows[0].w1 - 3.0 * rows[0].stderr, "{rows:?}");
    assert!(mehler_marginal_check(&[10], 2, 2, 100, 4, 1).is_err());
}

fn subsample(m: &EmpiricalMeasure<f64>, k: usize) -> EmpiricalMeasure<f64> {
    // the first k points of a pooled snapshot are an i.i.d.-exchangeable subsample
    EmpiricalMeasure::uniform(m.dim(), m.points()[..k * m.dim()].to_vec()).unwrap()
}

#[test]
fn reference_self_consistency() {
    let k = Kernel::maxwell(3, 1.0).unwrap();
    let spec = InitialDataSpec::tensor(BaseLaw::gaussian(3, 1.0));
    let cfg = |seed| ReferenceConfig { times: vec![0.0, 5.0], n_ref: 10_000, replicas: 1, seed, selection: Selection::Auto, center: false };
    let a = mean_field_reference(&spec, &k, &cfg(16)).unwrap();
    let b = mean_field_reference(&spec, &k, &cfg(17)).unwrap();
    assert!(a.conservation_drift() < 1e-10);
    let s0 = a.snapshot(0);
    let per: Vec<f64> = s0.points().chunks(3).map(|c| c.iter().map(|x| x * x).sum()).collect();
    assert!(Estimate::from_samples(&per).covers(3.0, 3.0));
    let w = |x: &EmpiricalMeasure<f64>, y: &EmpiricalMeasure<f64>| wasserstein(&subsample(x, 1000), &subsample(y, 1000), 1.0).unwrap().value;
    let base = w(&a.snapshot(0), &b.snapshot(0));
    assert!(w(&a.snapshot(1), &b.snapshot(1)) <= 2.0 * base);
}

#[test]
fn relaxation_flags_equilibrium_and_fits_anisotropic_data() {
    let k = Kernel::maxwell(3, 1.0).unwrap();
    let times: Vec<f64> = vec![0.0, 1.0, 2.0, 3.0, 5.0, 8.0, 12.0, 16.0];
    let metric = RelaxationMetric::Toscani { s: 2.0, grid: ContractionConfig::new(vec![], 0).grid };
    let cfg = ReferenceConfig { times, n_ref: 4000, replicas: 2, seed: 18, selection: Selection::Auto, center: true };
    let eq = mean_field_reference(&InitialDataSpec::tensor(BaseLaw::gaussian(3, 1.0)), &k, &cfg).unwrap();
    assert!(relaxation_fit(&eq, &k, &metric).unwrap().no_decay);
    let a = 3f64.sqrt();
    let aniso = InitialDataSpec::tensor(BaseLaw::TwoPoint { a: vec![a, 0.0, 0.0], b: vec![-a, 0.0, 0.0] });
    let r = mean_field_reference(&aniso, &k, &cfg).unwrap();
    let fit = relaxation_fit(&r, &k, &metric).unwrap();
    assert!(!fit.no_decay && fit.rate > 0.0, "{fit:?}");
    assert!((fit.lambda_bar - 1.0 / 3.0).abs() < 1e-10);
}

#[test]
fn contraction_of_identical_laws_sits_at_noise_floor() {
    let k = Kernel::maxwell(3, 1.0).unwrap();
    let mut cfg = ContractionConfig::new(vec![0.0, 1.0, 3.0], 19);
    cfg.n_ref = 2000;
    let law = BaseLaw::gaussian(3, 1.0);
    let r = contraction_check(&law, &law, &k, &cfg).unwrap();
    assert!(r.is_clean());
    for i in 0..3 {
        assert!(r.toscani[i] <= 2.0 * r.toscani_floor[i], "{r:?}");
        assert!(r.w2[i] <= 2.0 * r.w2_floor[i], "{r:?}");
    }
}

#[test]
fn reference_round_trips_through_csv() {
    let k = Kernel::maxwell(3, 1.0).unwrap();
    let cfg = ReferenceConfig { times: vec![0.0, 0.5], n_ref: 1000, replicas: 1, seed: 20, selection: Selection::Auto, center: false };
    let r = mean_field_reference(&InitialDataSpec::tensor(BaseLaw::gaussian(3, 1.0)), &k, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let [csv, _] = kacsim::io::write_trajectory(dir.path(), "ref", &r.trajectories[0], &r.role, "h").unwrap();
    let (back, meta) = kacsim::io::read_trajectory(&csv).unwrap();
    assert_eq!(meta.role, "reference");
    assert_eq!(back, r.trajectories[0]);
}
