//! The Kalman recursions checked against direct joint-Gaussian assembly.

use corsa::rng::substream;
use corsa::ssm::{
    collapse_groups, kalman_filter, kalman_smoother, sample_prior_trajectory,
    simulation_smoother, CompletedValues, GaussianMoments, GroupSeries,
};
use corsa_testkit::{
    joint_posterior, se_cov_gaussian, se_mean_iid, variance, JointPosterior, LocalLevelSpec,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_spd(dim: usize, scale: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let m = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    &m * m.transpose() * scale + DMatrix::identity(dim, dim) * 0.1 * scale
}

fn random_instance(
    p_n: usize,
    t_n: usize,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> (GroupSeries, DMatrix<f64>, DMatrix<f64>, GaussianMoments) {
    let sigma = random_spd(p_n, 1.0, rng);
    let psi = random_spd(p_n, 0.5, rng);
    let mean = DVector::from_fn(p_n, |_, _| 100.0 + 10.0 * rng.sample::<f64, _>(StandardNormal));
    let p0 = random_spd(p_n, 2.0, rng);
    let init = GaussianMoments::new(mean.clone(), p0);
    let means = (0..t_n)
        .map(|_| {
            DVector::from_fn(p_n, |p, _| mean[p] + 3.0 * rng.sample::<f64, _>(StandardNormal))
        })
        .collect();
    (GroupSeries { means, count }, sigma, psi, init)
}

fn oracle_for(
    series: &GroupSeries,
    sigma: &DMatrix<f64>,
    psi: &DMatrix<f64>,
    init: &GaussianMoments,
) -> JointPosterior {
    let p_n = init.dim();
    let spec = LocalLevelSpec {
        m0: init.mean.clone(),
        p0: init.cov.clone(),
        psi: psi.clone(),
        h: DMatrix::identity(p_n, p_n),
        r: sigma / series.count as f64,
    };
    joint_posterior(&spec, &series.means)
}

#[test]
fn filter_and_smoother_match_joint_gaussian_oracle() {
    let mut rng = substream(2024, &[1]);
    // All shapes with P * T <= 12.
    let shapes = [
        (1usize, 2usize),
        (1, 5),
        (1, 12),
        (2, 3),
        (2, 6),
        (3, 4),
    ];
    for &(p_n, t_n) in &shapes {
        for &count in &[1usize, 3] {
            for rep in 0..5 {
                let (series, sigma, psi, init) = random_instance(p_n, t_n, count, &mut rng);
                let oracle = oracle_for(&series, &sigma, &psi, &init);
                let filter = kalman_filter(&series, &sigma, &psi, &init).unwrap();
                assert!(
                    (filter.log_likelihood - oracle.log_likelihood).abs() < 1e-8,
                    "P={p_n} T={t_n} rep={rep}: {} vs {}",
                    filter.log_likelihood,
                    oracle.log_likelihood
                );
                let smoothed = kalman_smoother(&filter).unwrap();
                for t in 0..t_n {
                    let want_mean = oracle.state_mean(t);
                    let want_cov = oracle.state_cov(t);
                    assert!(
                        (&smoothed[t].mean - &want_mean).amax() < 1e-8,
                        "mean mismatch at t={t}"
                    );
                    assert!(
                        (&smoothed[t].cov - &want_cov).amax() < 1e-8,
                        "cov mismatch at t={t}"
                    );
                }
            }
        }
    }
}

#[test]
fn collapsed_posterior_equals_stacked_individual_posterior() {
    // Individual complete series stacked as independent measurements must
    // give the same state posterior as the collapsed mean series with
    // measurement noise Sigma / n.
    let mut rng = substream(2025, &[2]);
    for &(p_n, t_n, n_members) in &[(1usize, 4usize, 3usize), (2, 3, 2), (2, 4, 4)] {
        let sigma = random_spd(p_n, 1.0, &mut rng);
        let psi = random_spd(p_n, 0.4, &mut rng);
        let mean = DVector::from_element(p_n, 50.0);
        let init = GaussianMoments::new(mean, random_spd(p_n, 1.5, &mut rng));

        // Individual observations per member.
        let member_obs: Vec<Vec<DVector<f64>>> = (0..n_members)
            .map(|_| {
                (0..t_n)
                    .map(|_| {
                        DVector::from_fn(p_n, |_, _| {
                            50.0 + 4.0 * rng.sample::<f64, _>(StandardNormal)
                        })
                    })
                    .collect()
            })
            .collect();

        // Collapsed route.
        let means: Vec<DVector<f64>> = (0..t_n)
            .map(|t| {
                let mut m = DVector::zeros(p_n);
                for series in &member_obs {
                    m += &series[t];
                }
                m / n_members as f64
            })
            .collect();
        let collapsed = GroupSeries {
            means,
            count: n_members,
        };
        let filter = kalman_filter(&collapsed, &sigma, &psi, &init).unwrap();
        let smoothed = kalman_smoother(&filter).unwrap();

        // Stacked route through the oracle: H stacks n identities, R is
        // block diagonal.
        let mut h = DMatrix::zeros(n_members * p_n, p_n);
        let mut r = DMatrix::zeros(n_members * p_n, n_members * p_n);
        for m in 0..n_members {
            h.view_mut((m * p_n, 0), (p_n, p_n))
                .copy_from(&DMatrix::identity(p_n, p_n));
            r.view_mut((m * p_n, m * p_n), (p_n, p_n)).copy_from(&sigma);
        }
        let stacked_obs: Vec<DVector<f64>> = (0..t_n)
            .map(|t| {
                let mut y = DVector::zeros(n_members * p_n);
                for m in 0..n_members {
                    y.rows_mut(m * p_n, p_n).copy_from(&member_obs[m][t]);
                }
                y
            })
            .collect();
        let spec = LocalLevelSpec {
            m0: init.mean.clone(),
            p0: init.cov.clone(),
            psi: psi.clone(),
            h,
            r,
        };
        let oracle = joint_posterior(&spec, &stacked_obs);
        for t in 0..t_n {
            assert!(
                (&smoothed[t].mean - oracle.state_mean(t)).amax() < 1e-8,
                "collapsing mean mismatch at t={t}"
            );
            assert!(
                (&smoothed[t].cov - oracle.state_cov(t)).amax() < 1e-8,
                "collapsing cov mismatch at t={t}"
            );
        }
    }
}

#[test]
fn simulation_smoother_moments_match_oracle() {
    // Fixed T=3, P=1 instance; 50k draws.
    let series = GroupSeries {
        means: vec![
            DVector::from_element(1, 101.0),
            DVector::from_element(1, 103.0),
            DVector::from_element(1, 99.5),
        ],
        count: 2,
    };
    let sigma = DMatrix::from_element(1, 1, 2.0);
    let psi = DMatrix::from_element(1, 1, 0.7);
    let init = GaussianMoments::new(
        DVector::from_element(1, 100.0),
        DMatrix::from_element(1, 1, 9.0),
    );
    let filter = kalman_filter(&series, &sigma, &psi, &init).unwrap();
    let smoothed = kalman_smoother(&filter).unwrap();
    let oracle = oracle_for(&series, &sigma, &psi, &init);

    let n = 50_000;
    let mut paths: Vec<[f64; 3]> = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = substream(77, &[3, i as u64]);
        let draw = simulation_smoother(&series, &sigma, &psi, &init, &mut rng).unwrap();
        paths.push([draw[0][0], draw[1][0], draw[2][0]]);
    }

    for t in 0..3 {
        let xs: Vec<f64> = paths.iter().map(|p| p[t]).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let se = se_mean_iid(&xs);
        assert!(
            (m - smoothed[t].mean[0]).abs() < 3.0 * se,
            "t={t}: mean {m} vs {} (se {se})",
            smoothed[t].mean[0]
        );
        let v = variance(&xs);
        // Var of the sample variance of a Gaussian: 2 sigma^4 / (n - 1).
        let se_var = v * (2.0 / (n as f64 - 1.0)).sqrt();
        assert!(
            (v - smoothed[t].cov[(0, 0)]).abs() < 3.0 * se_var,
            "t={t}: var {v} vs {}",
            smoothed[t].cov[(0, 0)]
        );
    }

    // Lag-1 covariances against the joint posterior.
    for t in 0..2 {
        let m_t: f64 = paths.iter().map(|p| p[t]).sum::<f64>() / n as f64;
        let m_s: f64 = paths.iter().map(|p| p[t + 1]).sum::<f64>() / n as f64;
        let cov: f64 = paths
            .iter()
            .map(|p| (p[t] - m_t) * (p[t + 1] - m_s))
            .sum::<f64>()
            / (n as f64 - 1.0);
        let want = oracle.state_cross_cov(t, t + 1)[(0, 0)];
        let se = se_cov_gaussian(
            oracle.state_cov(t)[(0, 0)],
            oracle.state_cov(t + 1)[(0, 0)],
            want,
            n,
        );
        assert!(
            (cov - want).abs() < 3.0 * se,
            "lag-1 cov at t={t}: {cov} vs {want} (se {se})"
        );
    }
}

#[test]
fn prior_trajectory_variance_accumulates() {
    // Var(a_T) = P0 + (T - 1) Psi elementwise.
    let p0 = 4.0;
    let psi_v = 0.5;
    let t_n = 6;
    let init = GaussianMoments::new(
        DVector::from_element(1, 10.0),
        DMatrix::from_element(1, 1, p0),
    );
    let psi = DMatrix::from_element(1, 1, psi_v);
    let n = 50_000;
    let mut finals = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = substream(55, &[4, i as u64]);
        let path = sample_prior_trajectory(&init, &psi, t_n, &mut rng).unwrap();
        finals.push(path[t_n - 1][0]);
    }
    let v = variance(&finals);
    let want = p0 + (t_n as f64 - 1.0) * psi_v;
    let se_var = want * (2.0 / (n as f64 - 1.0)).sqrt();
    assert!((v - want).abs() < 3.0 * se_var, "var {v} vs {want}");
    let m = finals.iter().sum::<f64>() / n as f64;
    assert!((m - 10.0).abs() < 3.0 * (want / n as f64).sqrt());
}

#[test]
fn collapse_preserves_totals() {
    let mut rng = substream(31, &[9]);
    let p_n = 3;
    let q_n = 17;
    let t_n = 5;
    let values: Vec<f64> = (0..p_n * q_n * t_n)
        .map(|_| 100.0 + rng.sample::<f64, _>(StandardNormal))
        .collect();
    let completed = CompletedValues::new(values, p_n, q_n, t_n).unwrap();
    let allocation: Vec<usize> = (0..q_n).map(|q| q % 4).collect();
    let groups = collapse_groups(&completed, &allocation, 6);
    // Weighted group means reassemble the grand total.
    for t in 0..t_n {
        for p in 0..p_n {
            let grand: f64 = (0..q_n).map(|q| completed.get(p, q, t)).sum();
            let reassembled: f64 = groups
                .iter()
                .filter(|g| g.count > 0)
                .map(|g| g.means[t][p] * g.count as f64)
                .sum();
            assert!((grand - reassembled).abs() < 1e-9);
        }
    }
}
