use std::f64::consts::PI;

use kacsim::kernels::post_collision;
use kacsim::particle::run_trajectory;
use kacsim::quadrature::adaptive_simpson;
use kacsim::rng::substream;
use kacsim::stats::{chi_square, ks_one_sample, ks_two_sample, Estimate};
use kacsim::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn unit(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    g.into_iter().map(|x| x / n).collect()
}

fn cosines(k: &Kernel, u: &[f64], draws: usize, seed: u64) -> Vec<f64> {
    let mut rng = substream(seed, 0, 0);
    let mut s = vec![0.0; u.len()];
    (0..draws)
        .map(|_| {
            k.sample_sigma(u, &mut rng, &mut s);
            s.iter().zip(u).map(|(a, b)| a * b).sum()
        })
        .collect()
}

#[test]
fn grad_cutoff_cosine_is_uniform() {
    let k = Kernel::maxwell(3, 1.0).unwrap();
    let c = cosines(&k, &[0.0, 0.0, 1.0], 100_000, 1);
    let (_, p) = ks_one_sample(&c, |x| ((x + 1.0) / 2.0).clamp(0.0, 1.0));
    assert!(p > 0.01, "p = {p}");
}

#[test]
fn power_law_theta_histogram() {
    let law = AngularLaw::PowerLaw { nu: 0.5, eps_cut: 0.1, c_b: 1.0 };
    let k = Kernel::new(3, Potential::Maxwell, law).unwrap();
    let c = cosines(&k, &[1.0, 0.0, 0.0], 100_000, 2);
    let density = |t: f64| t.powf(-2.5) * t.sin();
    let bins = 30;
    // log-spaced bins follow the θ^{-3/2} concentration near the cutoff
    let edges: Vec<f64> = (0..=bins).map(|i| 0.1 * (PI / 0.1).powf(i as f64 / bins as f64)).collect();
    let mass: Vec<f64> = edges.windows(2).map(|w| adaptive_simpson(&density, w[0], w[1], 1e-12)).collect();
    let total: f64 = mass.iter().sum();
    let probs: Vec<f64> = mass.iter().map(|m| m / total).collect();
    let mut obs = vec![0u64; bins];
    for x in c {
        let t = x.clamp(-1.0, 1.0).acos();
        let b = edges.partition_point(|&e| e <= t).clamp(1, bins) - 1;
        obs[b] += 1;
    }
    let (_, p) = chi_square(&obs, &probs);
    assert!(p > 0.01, "p = {p}");
}

#[test]
fn sigma_law_is_rotation_equivariant() {
    let law = AngularLaw::PowerLaw { nu: 1.2, eps_cut: 0.2, c_b: 1.0 };
    let k = Kernel::new(3, Potential::Maxwell, law).unwrap();
    let mut rng = substream(3, 0, 0);
    let rotated = unit(&mut rng, 3);
    let a = cosines(&k, &[1.0, 0.0, 0.0], 20_000, 4);
    let b = cosines(&k, &rotated, 20_000, 5);
    let (_, p) = ks_two_sample(&a, &b);
    assert!(p > 0.01, "p = {p}");
}

#[test]
fn importance_weights_average_to_one() {
    let law = AngularLaw::PowerLaw { nu: 0.5, eps_cut: 0.3, c_b: 2.0 };
    let k = Kernel::new(3, Potential::Maxwell, law).unwrap();
    let mut rng = substream(6, 0, 0);
    let area = 4.0 * PI;
    let w: Vec<f64> = (0..1_000_000)
        .map(|_| {
            let s = unit(&mut rng, 3);
            k.b(s[0].clamp(-1.0, 1.0).acos()) * area / k.angular_mass()
        })
        .collect();
    let e = Estimate::from_samples(&w);
    assert!(e.covers(1.0, 3.0), "{e:?}");
}

#[test]
fn post_collision_conserves_on_random_triples() {
    let mut rng = substream(7, 0, 0);
    let mut o = [0.0; 3];
    let mut os = [0.0; 3];
    for _ in 0..1_000_000 {
        let v: Vec<f64> = (0..3).map(|_| 10.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let w: Vec<f64> = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let s = unit(&mut rng, 3);
        post_collision(&v, &w, &s, &mut o, &mut os);
        let e0: f64 = v.iter().chain(&w).map(|x| x * x).sum();
        let e1: f64 = o.iter().chain(&os).map(|x| x * x).sum();
        assert!((e0 - e1).abs() <= 1e-12 * e0);
        for c in 0..3 {
            assert!((v[c] + w[c] - o[c] - os[c]).abs() <= 1e-12 * e0.sqrt());
        }
    }
}

#[test]
fn two_particle_waiting_times_are_exponential() {
    let k = Kernel::maxwell(3, 2.5).unwrap();
    let mut rng = substream(8, 0, 0);
    let mut st = State::new(3, vec![1.0, 0.0, 0.0, -1.0, 0.5, 0.0]).unwrap();
    let mut gaps = Vec::with_capacity(100_000);
    let mut last = 0.0;
    for _ in 0..100_000 {
        assert!(st.step(&k, &mut rng));
        gaps.push(st.time() - last);
        last = st.time();
    }
    let rate = k.angular_mass();
    let (_, p) = ks_one_sample(&gaps, |x| 1.0 - (-rate * x).exp());
    assert!(p > 0.01, "p = {p}");
}

#[test]
fn hard_sphere_pair_frequencies() {
    let k = Kernel::hard_spheres(3, 1.0).unwrap();
    let mut rng = substream(9, 0, 0);
    let mut st = State::new(3, vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 10.0, 0.0, 0.0]).unwrap();
    let g = [1.0, 10.0, 9.0];
    let total: f64 = g.iter().sum();
    let mut counts = [0u64; 3];
    let draws = 100_000;
    for _ in 0..draws {
        let ev = st.propose(&k, &mut rng).unwrap();
        let idx = match (ev.i.min(ev.j), ev.i.max(ev.j)) {
            (0, 1) => 0,
            (0, 2) => 1,
            _ => 2,
        };
        counts[idx] += 1;
    }
    for c in 0..3 {
        let p = g[c] / total;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        assert!((counts[c] as f64 - draws as f64 * p).abs() <= 3.0 * sd, "{counts:?}");
    }
}

#[test]
fn maxwell_event_count_is_poisson() {
    let k = Kernel::maxwell(3, 1.0).unwrap();
    let plan = SimulationPlan { times: vec![5.0], replicas: 200, seed: 10, selection: Selection::Auto };
    let trajs = simulate(|_, rng| (0..300).map(|_| StandardNormal.sample(rng)).collect(), &k, &plan).unwrap();
    let total: u64 = trajs.iter().map(|t| t.events[0]).sum();
    let mean = 99.0 * 5.0 * 200.0;
    assert!((total as f64 - mean).abs() <= 3.0 * mean.sqrt(), "{total} vs {mean}");
}

#[test]
fn identical_seeds_reproduce_bitwise() {
    let k = Kernel::hard_spheres(3, 1.0).unwrap();
    let plan = SimulationPlan { times: vec![0.0, 0.5, 1.0], replicas: 4, seed: 11, selection: Selection::Auto };
    let init = |_: usize, rng: &mut rng_alias::R| (0..60).map(|_| StandardNormal.sample(rng)).collect::<Vec<f64>>();
    let a = simulate(init, &k, &plan).unwrap();
    let b = simulate(init, &k, &plan).unwrap();
    assert_eq!(a, b);
}

mod rng_alias {
    pub type R = kacsim::rng::SimRng;
}

#[test]
fn generator_matches_monte_carlo_sigma_average() {
    let k = Kernel::maxwell(3, 1.0).unwrap();
    let v = vec![0.7, -0.3, 0.4, -0.2, 0.9, 0.1];
    let st = State::new(3, v.clone()).unwrap();
    let phi = |x: &[f64]| (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) * x[0];
    let q = apply_generator(&phi, &st, &k, 16).unwrap();
    assert!(q.converged);
    let mut rng = substream(12, 0, 0);
    let mut o = [0.0; 3];
    let mut os = [0.0; 3];
    let base = phi(&v[..3]);
    let samples: Vec<f64> = (0..1_000_000)
        .map(|_| {
            let s = unit(&mut rng, 3);
            post_collision(&v[..3], &v[3..], &s, &mut o, &mut os);
            // uniform σ, ‖b‖ = 1; particle 2 sees the same σ with roles exchanged
            phi(&o) - base
        })
        .collect();
    let e = Estimate::from_samples(&samples);
    assert!(e.covers(q.value, 3.0), "quadrature {} vs {e:?}", q.value);
}

#[test]
fn exchangeable_coordinates() {
    let k = Kernel::hard_spheres(3, 1.0).unwrap();
    let plan = SimulationPlan { times: vec![1.0], replicas: 10_000, seed: 13, selection: Selection::Auto };
    let trajs = simulate(
        |_, rng| {
            let mut v: Vec<f64> = (0..24).map(|_| StandardNormal.sample(rng)).collect();
            // skewed but symmetric-in-particles law
            v.iter_mut().for_each(|x| *x = x.exp());
            v
        },
        &k,
        &plan,
    )
    .unwrap();
    let first: Vec<f64> = trajs.iter().map(|t| t.snapshots[0][0]).collect();
    let last: Vec<f64> = trajs.iter().map(|t| t.snapshots[0][7 * 3]).collect();
    let (_, p) = ks_two_sample(&first, &last);
    assert!(p > 0.001, "p = {p}");
}

#[test]
fn kac_sphere_support_is_preserved() {
    let k = Kernel::hard_spheres(3, 1.0).unwrap();
    let mut rng = substream(14, 0, 0);
    let mut v: Vec<f64> = (0..150).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x *= (50.0f64).sqrt() / norm);
    let st = State::new(3, v).unwrap();
    let tr = run_trajectory(st, &k, &[0.0, 1.0, 2.0, 5.0], &mut rng, 0, 14);
    for snap in &tr.snapshots {
        let m2 = snap.iter().map(|x| x * x).sum::<f64>() / 50.0;
        assert!((m2 - 1.0).abs() < 1e-12);
    }
}

#[test]
fn fourth_moment_stays_bounded() {
    let times: Vec<f64> = (0..=20).map(|t| t as f64).collect();
    for k in [Kernel::maxwell(3, 1.0).unwrap(), Kernel::hard_spheres(3, 1.0).unwrap()] {
        let plan = SimulationPlan { times: times.clone(), replicas: 20, seed: 15, selection: Selection::Auto };
        let a = 3f64.sqrt();
        let trajs = simulate(
            |_, rng| {
                (0..200)
                    .flat_map(|_| {
                        let s = if rng.random::<bool>() { a } else { -a };
                        [s, 0.0, 0.0]
                    })
                    .collect()
            },
            &k,
            &plan,
        )
        .unwrap();
        let m4: Vec<f64> = (0..times.len())
            .map(|s| {
                trajs
                    .iter()
                    .map(|t| t.snapshots[s].chunks(3).map(|c| c.iter().map(|x| x * x).sum::<f64>().powi(2)).sum::<f64>() / 200.0)
                    .sum::<f64>()
                    / 20.0
            })
            .collect();
        let plateau = m4[15..].iter().sum::<f64>() / 6.0;
        let bound = m4[0].max(plateau) * 1.1;
        assert!(m4.iter().all(|&m| m <= bound), "{m4:?}");
    }
}
