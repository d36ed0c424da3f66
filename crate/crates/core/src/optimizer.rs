//! Source-parameter search maximizing the finite-size key rate.
//!
//! Coordinate descent over (mu, nu1, nu2, p_mu, p_nu1); `p_nu2` is always
//! `1 - p_mu - p_nu1`. Each coordinate gets a coarse scan over its feasible
//! interval followed by a golden-section refinement of the best bracket.
//! The objective is flat (clamped at zero) over large regions, so no
//! gradients are used.

use crate::error::OptimizeError;
use crate::finite_key::expected_key_bits;
use crate::params::{LinkConfig, SecurityConfig, SourceConfig};

/// Finite-size secure bits per pulse at expectation tallies for `n_pulses`.
pub fn objective(source: &SourceConfig, link: &LinkConfig, security: &SecurityConfig, n_pulses: f64) -> f64 {
    if !(source.mu > source.nu1 + source.nu2 && source.nu1 > source.nu2 && source.nu2 >= 0.0) {
        return 0.0;
    }
    if source.probabilities().iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
        return 0.0;
    }
    expected_key_bits(n_pulses, source, link, security) / n_pulses
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSettings {
    pub mu_min: f64,
    pub mu_max: f64,
    pub nu1_min: f64,
    /// Smallest send probability any class may take.
    pub p_min: f64,
    /// Gap kept between ordered intensities.
    pub gap: f64,
    pub max_sweeps: usize,
    pub scan_points: usize,
    /// Golden-section stops when the bracket is this fraction of the interval.
    pub line_tolerance: f64,
    /// Relative improvement below which a sweep counts as converged.
    pub sweep_tolerance: f64,
    pub start: SourceConfig,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            mu_min: 0.01,
            mu_max: 1.5,
            nu1_min: 0.001,
            p_min: 1e-5,
            gap: 1e-6,
            max_sweeps: 40,
            scan_points: 11,
            line_tolerance: 1e-5,
            sweep_tolerance: 1e-7,
            start: SourceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub best: SourceConfig,
    /// bits/pulse
    pub rate: f64,
    pub evaluations: usize,
    /// Best rate after each sweep.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
enum Coord {
    Mu,
    Nu1,
    Nu2,
    PMu,
    PNu1,
}

const COORDS: [Coord; 5] = [Coord::Mu, Coord::Nu1, Coord::Nu2, Coord::PMu, Coord::PNu1];

fn get(s: &SourceConfig, c: Coord) -> f64 {
    match c {
        Coord::Mu => s.mu,
        Coord::Nu1 => s.nu1,
        Coord::Nu2 => s.nu2,
        Coord::PMu => s.p_mu,
        Coord::PNu1 => s.p_nu1,
    }
}

fn set(s: &SourceConfig, c: Coord, v: f64) -> SourceConfig {
    let mut out = s.clone();
    match c {
        Coord::Mu => out.mu = v,
        Coord::Nu1 => out.nu1 = v,
        Coord::Nu2 => out.nu2 = v,
        Coord::PMu => out.p_mu = v,
        Coord::PNu1 => out.p_nu1 = v,
    }
    out.p_nu2 = 1.0 - out.p_mu - out.p_nu1;
    out
}

/// Feasible interval for one coordinate with the others held fixed.
fn interval(s: &SourceConfig, c: Coord, st: &SearchSettings) -> (f64, f64) {
    let g = st.gap;
    match c {
        Coord::Mu => ((st.mu_min).max(s.nu1 + s.nu2 + g), st.mu_max),
        Coord::Nu1 => (st.nu1_min.max(s.nu2 + g), s.mu - s.nu2 - g),
        Coord::Nu2 => (0.0, (s.nu1 - g).min(s.mu - s.nu1 - g)),
        Coord::PMu => (st.p_min, 1.0 - s.p_nu1 - st.p_min),
        Coord::PNu1 => (st.p_min, 1.0 - s.p_mu - st.p_min),
    }
}

/// Moves a candidate into the feasible set.
pub fn project(s: &SourceConfig, st: &SearchSettings) -> SourceConfig {
    let mut out = s.clone();
    let g = st.gap;
    out.mu = out.mu.clamp(st.mu_min, st.mu_max);
    out.nu1 = out.nu1.clamp(st.nu1_min, out.mu - 2.0 * g);
    out.nu2 = out.nu2.clamp(0.0, (out.nu1 - g).min(out.mu - out.nu1 - g)).max(0.0);
    out.p_mu = out.p_mu.clamp(st.p_min, 1.0 - 2.0 * st.p_min);
    out.p_nu1 = out.p_nu1.clamp(st.p_min, 1.0 - out.p_mu - st.p_min);
    out.p_nu2 = 1.0 - out.p_mu - out.p_nu1;
    out
}

struct Search<'a> {
    link: &'a LinkConfig,
    security: &'a SecurityConfig,
    n_pulses: f64,
    evaluations: usize,
}

impl Search<'_> {
    fn eval(&mut self, s: &SourceConfig) -> f64 {
        self.evaluations += 1;
        objective(s, self.link, self.security, self.n_pulses)
    }

    /// Best value of coordinate `c` on [lo, hi]; never returns worse than `current`.
    fn line_search(&mut self, s: &SourceConfig, c: Coord, lo: f64, hi: f64, current: f64, st: &SearchSettings) -> (f64, f64) {
        let mut best_x = get(s, c);
        let mut best_f = current;
        if !(hi > lo) {
            return (best_x, best_f);
        }
        let n = st.scan_points.max(3);
        let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let fs: Vec<f64> = xs.iter().map(|&x| self.eval(&set(s, c, x))).collect();
        let (imax, &fmax) = fs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty scan");
        if fmax > best_f {
            best_x = xs[imax];
            best_f = fmax;
        }

        // refine around the better of the scan peak and the incumbent
        let center = best_x;
        let width = (hi - lo) / (n - 1) as f64;
        let (mut a, mut b) = ((center - width).max(lo), (center + width).min(hi));
        const INV_PHI: f64 = 0.618_033_988_749_894_8;
        let mut x1 = b - INV_PHI * (b - a);
        let mut x2 = a + INV_PHI * (b - a);
        let mut f1 = self.eval(&set(s, c, x1));
        let mut f2 = self.eval(&set(s, c, x2));
        while b - a > st.line_tolerance * (hi - lo) {
            if f1 >= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - INV_PHI * (b - a);
                f1 = self.eval(&set(s, c, x1));
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + INV_PHI * (b - a);
                f2 = self.eval(&set(s, c, x2));
            }
            for (x, f) in [(x1, f1), (x2, f2)] {
                if f > best_f {
                    best_f = f;
                    best_x = x;
                }
            }
        }
        (best_x, best_f)
    }
}

/// Maximizes the finite-size key rate over source parameters.
pub fn optimize_source(
    link: &LinkConfig,
    security: &SecurityConfig,
    n_pulses: f64,
    settings: &SearchSettings,
) -> Result<OptimizationResult, OptimizeError> {
    let st = settings;
    if !(st.mu_min > 0.0 && st.mu_max > st.mu_min) {
        return Err(OptimizeError::InfeasibleBounds(format!(
            "mu range [{}, {}] is empty",
            st.mu_min, st.mu_max
        )));
    }
    if !(st.nu1_min >= 0.0 && st.nu1_min + 2.0 * st.gap < st.mu_max) {
        return Err(OptimizeError::InfeasibleBounds(format!(
            "nu1 minimum {} leaves no room below mu max {}",
            st.nu1_min, st.mu_max
        )));
    }
    if !(st.p_min > 0.0 && 3.0 * st.p_min < 1.0) {
        return Err(OptimizeError::InfeasibleBounds(format!(
            "minimum send probability {} is infeasible",
            st.p_min
        )));
    }
    if !(n_pulses > 0.0) {
        return Err(OptimizeError::InfeasibleBounds(format!("n_pulses {n_pulses} must be positive")));
    }

    let mut search = Search {
        link,
        security,
        n_pulses,
        evaluations: 0,
    };
    let mut best = project(&st.start, st);
    let mut best_f = search.eval(&best);
    let mut trace = Vec::new();

    for _ in 0..st.max_sweeps {
        let sweep_start = best_f;
        for c in COORDS {
            let (lo, hi) = interval(&best, c, st);
            let (x, f) = search.line_search(&best, c, lo, hi, best_f, st);
            if f > best_f {
                best = set(&best, c, x);
                best_f = f;
            }
        }
        trace.push(best_f);
        if best_f - sweep_start <= st.sweep_tolerance * best_f.abs() {
            break;
        }
    }

    Ok(OptimizationResult {
        best,
        rate: best_f,
        evaluations: search.evaluations,
        trace,
    })
}
