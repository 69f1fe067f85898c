//! Independent reference computations: brute-force best responses,
//! finite-difference calculus checks, bisection boundary optima, a
//! standard-function property checker and random instance generation.

use rand::Rng;

use crate::game::PowerMap;
use crate::model::{
    utility_priced, utility_priced_gradient, utility_priced_hessian, Bounds, ChannelModel, Strategy, UserParams,
    DEFAULT_BANDWIDTH_HZ, DEFAULT_NOISE_W, DEFAULT_PATHLOSS_EXPONENT, DEFAULT_SHADOWING,
};

/// Relative step used by the central differences.
pub const FD_RELATIVE_STEP: f64 = 1e-6;

/// Logarithmic grid with `n` points spanning `[b.min, b.max]`, both
/// endpoints included.
pub fn log_grid(b: Bounds, n: usize) -> Vec<f64> {
    let (lo, hi) = (b.min.ln(), b.max.ln());
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|k| match k {
            0 => b.min,
            k if k == n - 1 => b.max,
            k => (lo + k as f64 * step).exp(),
        })
        .collect()
}

/// Width of one logarithmic grid cell (natural-log units).
pub fn log_cell(b: Bounds, n: usize) -> f64 {
    (b.max.ln() - b.min.ln()) / (n - 1) as f64
}

/// Distance between two strategies in grid cells: the larger of the two
/// per-axis log distances divided by the cell widths.
pub fn cells_apart(a: Strategy, b: Strategy, power: Bounds, rate: Bounds, n: usize) -> f64 {
    let dp = (a.power.ln() - b.power.ln()).abs() / log_cell(power, n);
    let dr = (a.rate.ln() - b.rate.ln()).abs() / log_cell(rate, n);
    dp.max(dr)
}

/// Argmax of the priced utility over an `n × n` logarithmic grid on the box.
///
/// # Panics
/// If `n < 100` or the box is not strictly positive.
pub fn grid_best_response(
    r_eff: f64,
    alpha1: f64,
    alpha2: f64,
    lambda: f64,
    power: Bounds,
    rate: Bounds,
    n: usize,
) -> Strategy {
    assert!(n >= 100, "grid needs at least 100 points per axis");
    assert!(power.min > 0.0 && rate.min > 0.0, "logarithmic grid needs a positive box");
    let ps = log_grid(power, n);
    let rs = log_grid(rate, n);
    let mut best = (f64::NEG_INFINITY, Strategy::new(ps[0], rs[0]));
    for &p in &ps {
        for &r in &rs {
            let s = Strategy::new(p, r);
            if let Ok(u) = utility_priced(s, r_eff, alpha1, alpha2, lambda) {
                if u > best.0 {
                    best = (u, s);
                }
            }
        }
    }
    best.1
}

fn rel_err(approx: f64, exact: f64, scale: f64) -> f64 {
    (approx - exact).abs() / scale
}

/// Worst relative disagreement between the analytic gradient and Hessian
/// and central finite differences at an interior strategy.
///
/// Each entry is normalised by the sum of the magnitudes of the terms that
/// make it up, so near-cancelling entries (a gradient close to a stationary
/// point) are judged on their size before cancellation.
pub fn fd_gradient_check(strategy: Strategy, r_eff: f64, alpha1: f64, alpha2: f64, lambda: f64) -> f64 {
    let u = |p: f64, r: f64| utility_priced(Strategy::new(p, r), r_eff, alpha1, alpha2, lambda).unwrap_or(f64::NAN);
    let grad = |p: f64, r: f64| utility_priced_gradient(Strategy::new(p, r), r_eff, alpha1, alpha2, lambda);
    let (p, r) = (strategy.power, strategy.rate);
    let hp = FD_RELATIVE_STEP * p;
    let hr = FD_RELATIVE_STEP * r;

    let g = grad(p, r);
    let h = utility_priced_hessian(strategy, r_eff, alpha1, alpha2, lambda);

    let s = alpha1 * p + alpha2 * r_eff * r;
    let ratio = alpha2 / alpha1;
    let g_scale = [
        alpha1 / s + lambda * p / (ratio * r_eff),
        alpha2 * r_eff / s + lambda * ratio * r_eff * r,
    ];
    let h_scale = [
        alpha1 * alpha1 / (s * s) + lambda / (ratio * r_eff),
        alpha1 * alpha2 * r_eff / (s * s),
        (alpha2 * r_eff / s).powi(2) + lambda * ratio * r_eff,
    ];

    let fd_gp = (u(p + hp, r) - u(p - hp, r)) / (2.0 * hp);
    let fd_gr = (u(p, r + hr) - u(p, r - hr)) / (2.0 * hr);

    let (gp_plus, gp_minus) = (grad(p + hp, r), grad(p - hp, r));
    let (gr_plus, gr_minus) = (grad(p, r + hr), grad(p, r - hr));
    let fd_hpp = (gp_plus[0] - gp_minus[0]) / (2.0 * hp);
    let fd_hpr = (gr_plus[0] - gr_minus[0]) / (2.0 * hr);
    let fd_hrp = (gp_plus[1] - gp_minus[1]) / (2.0 * hp);
    let fd_hrr = (gr_plus[1] - gr_minus[1]) / (2.0 * hr);

    [
        rel_err(fd_gp, g[0], g_scale[0]),
        rel_err(fd_gr, g[1], g_scale[1]),
        rel_err(fd_hpp, h[0][0], h_scale[0]),
        rel_err(fd_hpr, h[0][1], h_scale[1]),
        rel_err(fd_hrp, h[1][0], h_scale[1]),
        rel_err(fd_hrr, h[1][1], h_scale[2]),
    ]
    .into_iter()
    .fold(0.0, |worst, e| if e.is_nan() { f64::INFINITY } else { worst.max(e) })
}

/// Maximises a strictly concave one-dimensional function on `[lo, hi]` by
/// bisecting the sign of its derivative in log space.
fn bisect_concave_max(derivative: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    if derivative(lo) <= 0.0 {
        return lo;
    }
    if derivative(hi) >= 0.0 {
        return hi;
    }
    let (mut a, mut b) = (lo.ln(), hi.ln());
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if derivative(m.exp()) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    (0.5 * (a + b)).exp()
}

/// Utility-maximising rate in `rate` with the power held at `power`.
pub fn rate_optimum_at_power(r_eff: f64, power: f64, alpha1: f64, alpha2: f64, lambda: f64, rate: Bounds) -> f64 {
    bisect_concave_max(
        |r| utility_priced_gradient(Strategy::new(power, r), r_eff, alpha1, alpha2, lambda)[1],
        rate.min,
        rate.max,
    )
}

/// Utility-maximising power in `power` with the rate held at `rate`.
pub fn power_optimum_at_rate(r_eff: f64, rate: f64, alpha1: f64, alpha2: f64, lambda: f64, power: Bounds) -> f64 {
    bisect_concave_max(
        |p| utility_priced_gradient(Strategy::new(p, rate), r_eff, alpha1, alpha2, lambda)[0],
        power.min,
        power.max,
    )
}

/// One failed property check.
#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub property: &'static str,
    pub user: usize,
    pub powers: Vec<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StandardFunctionReport {
    pub samples: usize,
    pub positivity_violations: usize,
    pub monotonicity_violations: usize,
    pub scalability_violations: usize,
    /// First few counterexamples, for diagnosis.
    pub examples: Vec<Counterexample>,
}

impl StandardFunctionReport {
    pub fn violations(&self) -> usize {
        self.positivity_violations + self.monotonicity_violations + self.scalability_violations
    }

    pub fn passed(&self) -> bool {
        self.violations() == 0
    }

    pub fn merge(&mut self, other: StandardFunctionReport) {
        self.samples += other.samples;
        self.positivity_violations += other.positivity_violations;
        self.monotonicity_violations += other.monotonicity_violations;
        self.scalability_violations += other.scalability_violations;
        let room = 8usize.saturating_sub(self.examples.len());
        self.examples.extend(other.examples.into_iter().take(room));
    }
}

/// Slack allowed on the weak (monotonicity) comparison for rounding.
const MONOTONE_SLACK: f64 = 1e-12;

/// Checks positivity, monotonicity and scalability of `map` at each sample
/// power vector.
///
/// Monotonicity compares `I(q)` and `I(p)` for `q ≤ p` drawn by shrinking
/// each component of `p` by an independent factor in `(0, 1]`; scalability
/// draws `a ∈ (1, 10]` and requires `I(a p) < a I(p)` strictly.
pub fn standard_function_check<M: PowerMap + ?Sized, R: Rng + ?Sized>(
    map: &M,
    samples: &[Vec<f64>],
    rng: &mut R,
) -> StandardFunctionReport {
    let mut report = StandardFunctionReport { samples: samples.len(), ..Default::default() };
    let record = |report: &mut StandardFunctionReport, property, user, powers: &[f64], detail: String| {
        if report.examples.len() < 8 {
            report.examples.push(Counterexample { property, user, powers: powers.to_vec(), detail });
        }
    };
    for p in samples {
        let ip = map.apply(p);

        for (i, &v) in ip.iter().enumerate() {
            if !(v > 0.0) {
                report.positivity_violations += 1;
                record(&mut report, "positivity", i, p, format!("I(p)={v}"));
            }
        }

        let q: Vec<f64> = p.iter().map(|&x| x * (1.0 - rng.gen::<f64>())).collect();
        let iq = map.apply(&q);
        for i in 0..ip.len() {
            if iq[i] > ip[i] * (1.0 + MONOTONE_SLACK) {
                report.monotonicity_violations += 1;
                record(&mut report, "monotonicity", i, p, format!("I(q)={} > I(p)={}", iq[i], ip[i]));
            }
        }

        let a = loop {
            let a: f64 = rng.gen_range(1.0..=10.0);
            if a > 1.0 {
                break a;
            }
        };
        let scaled: Vec<f64> = p.iter().map(|x| a * x).collect();
        let i_scaled = map.apply(&scaled);
        for i in 0..ip.len() {
            if !(i_scaled[i] < a * ip[i]) {
                report.scalability_violations += 1;
                record(&mut report, "scalability", i, p, format!("a={a}: I(ap)={} >= aI(p)={}", i_scaled[i], a * ip[i]));
            }
        }
    }
    report
}

/// Random network: 2–8 users at 20–500 m from each of `stations` stations,
/// default propagation, noise drawn log-uniformly from the default up to
/// 1e-10 W, targets 5–30, prices 1e-5–1e-3 and the default strategy box.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, stations: usize) -> (ChannelModel, Vec<UserParams>) {
    let m = rng.gen_range(2..=8);
    let distances: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..stations).map(|_| rng.gen_range(20.0..500.0)).collect())
        .collect();
    let noise = log_uniform(rng, DEFAULT_NOISE_W, 1e-10);
    let channel = ChannelModel::new(distances, DEFAULT_PATHLOSS_EXPONENT, DEFAULT_SHADOWING, noise, DEFAULT_BANDWIDTH_HZ)
        .expect("generated distances are valid");
    let (pb, rb) = crate::game::default_box();
    let users = (0..m)
        .map(|_| {
            let target = rng.gen_range(5.0..30.0);
            UserParams::new(1e6, target * 1e6 / DEFAULT_BANDWIDTH_HZ, log_uniform(rng, 1e-5, 1e-3), pb, rb)
        })
        .collect();
    (channel, users)
}

/// Power vectors with components drawn log-uniformly from `[lo, hi]`.
pub fn random_power_samples<R: Rng + ?Sized>(rng: &mut R, users: usize, count: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    (0..count).map(|_| (0..users).map(|_| log_uniform(rng, lo, hi)).collect()).collect()
}

/// A strategy within a factor of ten (per axis) of the stationary point,
/// where the utility and its derivatives have comparable magnitudes.
pub fn random_interior_point<R: Rng + ?Sized>(rng: &mut R, r_eff: f64, alpha1: f64, alpha2: f64, lambda: f64) -> Strategy {
    let ratio = alpha2 / alpha1;
    let p = (0.5 * ratio * r_eff / lambda).sqrt();
    let r = (0.5 / (ratio * lambda * r_eff)).sqrt();
    Strategy::new(p * log_uniform(rng, 0.1, 10.0), r * log_uniform(rng, 0.1, 10.0))
}

pub fn log_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo.ln()..=hi.ln()).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{bounded_step, unconstrained_best_response, UpdatePolicy};
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    const R_EFF_TABLE2: f64 = 0.2590;

    fn box_() -> (Bounds, Bounds) {
        crate::game::default_box()
    }

    #[test]
    fn grid_includes_edges() {
        let g = log_grid(Bounds::new(1e-3, 10.0), 101);
        assert_eq!(g[0], 1e-3);
        assert_eq!(g[100], 10.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn grid_finds_the_interior_optimum() {
        let (_, rb) = box_();
        let pb = Bounds::new(1e-6, 3.0);
        let g = grid_best_response(R_EFF_TABLE2, 1e6, 12.9492, 4e-4, pb, rb, 400);
        assert!(cells_apart(g, Strategy::new(0.0647, 19306.0), pb, rb, 400) <= 1.0);
    }

    #[test]
    fn heavy_pricing_pushes_to_lower_corner() {
        let (pb, rb) = box_();
        let g = grid_best_response(1.0, 1e6, 20.0, 1e12, pb, rb, 200);
        assert_eq!(g, Strategy::new(pb.min, rb.min));
    }

    #[test]
    fn excluded_optimum_lands_on_near_power_edge() {
        let pb = Bounds::new(1e-6, 0.03);
        let (_, rb) = box_();
        let g = grid_best_response(R_EFF_TABLE2, 1e6, 12.9492, 4e-4, pb, rb, 300);
        assert_eq!(g.power, 0.03);
    }

    #[test]
    fn bisection_agrees_with_closed_form_boundary_roots() {
        let rb = Bounds::new(0.1, 96_000.0);
        let r = rate_optimum_at_power(0.3235, 0.0647, 1e6, 12.9492, 4e-4, rb);
        let closed = crate::game::rate_update_power_bounded(0.3235, 0.0647, 1e6, 12.9492, 4e-4);
        assert!((r / closed - 1.0).abs() < 1e-12);
        assert!((r / 17899.0 - 1.0).abs() < 5e-4);
        let pb = Bounds::new(1e-6, 3.0);
        let p = power_optimum_at_rate(0.2, 47_000.0, 1e6, 20.0, 1e-5, pb);
        let closed = crate::game::power_update_rate_bounded(0.2, 47_000.0, 1e6, 20.0, 1e-5);
        assert!((p / closed - 1.0).abs() < 1e-12);
    }

    #[test]
    fn calculus_checks_pass_on_random_points() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..100 {
            let r_eff = log_uniform(&mut rng, 1e-3, 10.0);
            let a2 = rng.gen_range(5.0..40.0);
            let lambda = log_uniform(&mut rng, 1e-6, 1e-2);
            let s = random_interior_point(&mut rng, r_eff, 1e6, a2, lambda);
            let e = fd_gradient_check(s, r_eff, 1e6, a2, lambda);
            assert!(e <= 1e-5, "error {e}");
        }
    }

    #[test]
    fn stationary_point_has_vanishing_gradient() {
        let s = unconstrained_best_response(R_EFF_TABLE2, 1e6, 12.9492, 4e-4).unwrap();
        let g = utility_priced_gradient(s, R_EFF_TABLE2, 1e6, 12.9492, 4e-4);
        let u = utility_priced(s, R_EFF_TABLE2, 1e6, 12.9492, 4e-4).unwrap();
        // each component is a difference of O(1/p) and O(1/r) terms, so
        // compare the scaled components
        assert!((g[0] * s.power).abs() <= 1e-9 * u.abs());
        assert!((g[1] * s.rate).abs() <= 1e-9 * u.abs());
    }

    #[test]
    fn single_bound_kkt_step_is_the_grid_optimum() {
        let pb = Bounds::new(1e-6, 0.0647);
        let (_, rb) = box_();
        let user = UserParams::new(1e6, 12.9492, 4e-4, pb, rb);
        let kkt = bounded_step(&user, 0.3235, UpdatePolicy::Kkt).unwrap();
        let grid = grid_best_response(0.3235, 1e6, 12.9492, 4e-4, pb, rb, 400);
        assert!(cells_apart(kkt, grid, pb, rb, 400) <= 1.0);
        // a finer grid separates the clamped point from the true optimum
        let clamp = bounded_step(&user, 0.3235, UpdatePolicy::Clamp).unwrap();
        let fine = grid_best_response(0.3235, 1e6, 12.9492, 4e-4, pb, rb, 1000);
        assert!(cells_apart(clamp, fine, pb, rb, 1000) > 2.0);
        assert!(cells_apart(kkt, fine, pb, rb, 1000) <= 1.0);
    }

    #[test]
    fn constant_map_is_standard() {
        let mut rng = StdRng::seed_from_u64(1);
        let samples = random_power_samples(&mut rng, 4, 1000, 1e-6, 3.0);
        let map = |p: &[f64]| vec![1.0; p.len()];
        assert!(standard_function_check(&map, &samples, &mut rng).passed());
    }

    #[test]
    fn affine_without_offset_fails_scalability() {
        let mut rng = StdRng::seed_from_u64(2);
        let samples = random_power_samples(&mut rng, 3, 50, 1e-3, 1.0);
        let map = |p: &[f64]| p.iter().map(|x| 2.0 * x).collect::<Vec<_>>();
        let report = standard_function_check(&map, &samples, &mut rng);
        assert_eq!(report.scalability_violations, 150);
        assert_eq!(report.positivity_violations + report.monotonicity_violations, 0);
        assert!(!report.examples.is_empty());
    }

    #[test]
    fn decreasing_map_fails_monotonicity() {
        let mut rng = StdRng::seed_from_u64(3);
        let samples = random_power_samples(&mut rng, 2, 50, 1e-3, 1.0);
        let map = |p: &[f64]| p.iter().map(|x| 1.0 / x).collect::<Vec<_>>();
        assert!(standard_function_check(&map, &samples, &mut rng).monotonicity_violations > 0);
    }

    #[test]
    fn random_instances_are_valid() {
        let mut rng = StdRng::seed_from_u64(4);
        for stations in 1..=3 {
            let (ch, users) = random_instance(&mut rng, stations);
            assert_eq!(ch.stations(), stations);
            assert_eq!(ch.users(), users.len());
            users.iter().for_each(|u| u.validate().unwrap());
        }
    }
}
