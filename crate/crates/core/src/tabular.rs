//! Exact successor representations and occupancy measures on finite MDPs.
//!
//! State-action pairs are flattened as `x = s * n_a + a`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitRng;

const STOCHASTIC_TOL: f64 = 1e-12;

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::validation(format!("{what} has a negative or non-finite entry")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::validation(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

/// Finite MDP with dense transitions `t[s][a][s']` and start distribution `mu0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularMDP {
    pub n_s: usize,
    pub n_a: usize,
    pub t: Vec<Vec<Vec<f64>>>,
    pub mu0: Vec<f64>,
}

impl TabularMDP {
    pub fn new(t: Vec<Vec<Vec<f64>>>, mu0: Vec<f64>) -> Result<Self> {
        let n_s = t.len();
        let n_a = t.first().map_or(0, Vec::len);
        let mdp = Self { n_s, n_a, t, mu0 };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_s == 0 || self.n_a == 0 {
            return Err(Error::validation("MDP needs at least one state and one action"));
        }
        if self.t.len() != self.n_s || self.mu0.len() != self.n_s {
            return Err(Error::validation("transition or start table has the wrong number of states"));
        }
        for (s, row) in self.t.iter().enumerate() {
            if row.len() != self.n_a {
                return Err(Error::validation(format!("state {s} has {} actions", row.len())));
            }
            for (a, p) in row.iter().enumerate() {
                if p.len() != self.n_s {
                    return Err(Error::validation(format!("T({s},{a},·) has length {}", p.len())));
                }
                check_distribution(p, &format!("T({s},{a},·)"))?;
            }
        }
        check_distribution(&self.mu0, "mu0")
    }

    pub fn n_pairs(&self) -> usize {
        self.n_s * self.n_a
    }

    pub fn pair(&self, s: usize, a: usize) -> usize {
        s * self.n_a + a
    }

    pub fn sample_next(&self, s: usize, a: usize, rng: &mut SplitRng) -> usize {
        rng.categorical(&self.t[s][a])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mdp: Self = serde_json::from_str(text)?;
        mdp.validate()?;
        Ok(mdp)
    }
}

/// Stochastic policy `pi[s][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    pub pi: Vec<Vec<f64>>,
}

impl TabularPolicy {
    pub fn new(pi: Vec<Vec<f64>>) -> Result<Self> {
        for (s, row) in pi.iter().enumerate() {
            check_distribution(row, &format!("pi({s},·)"))?;
        }
        Ok(Self { pi })
    }

    /// Deterministic policy choosing `actions[s]` in state `s`.
    pub fn deterministic(actions: &[usize], n_a: usize) -> Result<Self> {
        let pi = actions
            .iter()
            .map(|&a| {
                if a >= n_a {
                    return Err(Error::validation(format!("action {a} out of range")));
                }
                let mut row = vec![0.0; n_a];
                row[a] = 1.0;
                Ok(row)
            })
            .collect::<Result<_>>()?;
        Ok(Self { pi })
    }

    pub fn uniform(n_s: usize, n_a: usize) -> Self {
        Self {
            pi: vec![vec![1.0 / n_a as f64; n_a]; n_s],
        }
    }

    fn check_against(&self, mdp: &TabularMDP) -> Result<()> {
        if self.pi.len() != mdp.n_s || self.pi.iter().any(|r| r.len() != mdp.n_a) {
            return Err(Error::validation("policy shape does not match the MDP"));
        }
        Ok(())
    }

    pub fn sample(&self, s: usize, rng: &mut SplitRng) -> usize {
        rng.categorical(&self.pi[s])
    }
}

/// Successor representation over state-action pairs, row-major `n × n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SRMatrix {
    pub n_s: usize,
    pub n_a: usize,
    pub values: Vec<f64>,
}

impl SRMatrix {
    pub fn n(&self) -> usize {
        self.n_s * self.n_a
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[x * self.n() + y]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        let n = self.n();
        &self.values[x * n..(x + 1) * n]
    }

    pub fn max_abs_diff(&self, other: &SRMatrix) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Header row `x,s0a0,s0a1,...` then one row per pair.
    pub fn to_csv(&self) -> String {
        let n = self.n();
        let label = |x: usize| format!("s{}a{}", x / self.n_a, x % self.n_a);
        let mut out = String::from("pair");
        for y in 0..n {
            out.push(',');
            out.push_str(&label(y));
        }
        out.push('\n');
        for x in 0..n {
            out.push_str(&label(x));
            for v in self.row(x) {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// `P[(s,a),(s',a')] = T(s'|s,a) π(a'|s')`, row-major.
pub fn pair_transition_matrix(mdp: &TabularMDP, policy: &TabularPolicy) -> Result<Vec<f64>> {
    mdp.validate()?;
    policy.check_against(mdp)?;
    let n = mdp.n_pairs();
    let mut p = vec![0.0; n * n];
    for s in 0..mdp.n_s {
        for a in 0..mdp.n_a {
            let x = mdp.pair(s, a);
            for s2 in 0..mdp.n_s {
                let ts = mdp.t[s][a][s2];
                if ts == 0.0 {
                    continue;
                }
                for a2 in 0..mdp.n_a {
                    p[x * n + mdp.pair(s2, a2)] = ts * policy.pi[s2][a2];
                }
            }
        }
    }
    Ok(p)
}

/// Start distribution over pairs, `μ0(s) π(a|s)`.
pub fn start_pair_distribution(mdp: &TabularMDP, policy: &TabularPolicy) -> Vec<f64> {
    let mut mu = vec![0.0; mdp.n_pairs()];
    for s in 0..mdp.n_s {
        for a in 0..mdp.n_a {
            mu[mdp.pair(s, a)] = mdp.mu0[s] * policy.pi[s][a];
        }
    }
    mu
}

/// Solve `A X = B` for square `A` (`n × n`) and `B` (`n × m`) with partial pivoting.
pub fn solve_linear(a: &[f64], b: &[f64], n: usize, m: usize) -> Result<Vec<f64>> {
    if a.len() != n * n || b.len() != n * m {
        return Err(Error::contract("linear system has inconsistent sizes"));
    }
    let mut a = a.to_vec();
    let mut x = b.to_vec();
    let scale = a.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .expect("non-empty range");
        if a[piv * n + col].abs() <= 1e-12 * scale {
            return Err(Error::validation("singular linear system"));
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            for k in 0..m {
                x.swap(col * m + k, piv * m + k);
            }
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[r * n + k] -= f * a[col * n + k];
            }
            for k in 0..m {
                x[r * m + k] -= f * x[col * m + k];
            }
        }
    }
    for col in (0..n).rev() {
        let d = a[col * n + col];
        for k in 0..m {
            let mut v = x[col * m + k];
            for j in col + 1..n {
                v -= a[col * n + j] * x[j * m + k];
            }
            x[col * m + k] = v / d;
        }
    }
    Ok(x)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::validation(format!(
            "discount {gamma} outside [0, 1); the system is singular"
        )));
    }
    Ok(())
}

/// `M = (I − γP)^{-1}`.
pub fn exact_sr(mdp: &TabularMDP, policy: &TabularPolicy, gamma: f64) -> Result<SRMatrix> {
    check_gamma(gamma)?;
    let p = pair_transition_matrix(mdp, policy)?;
    let n = mdp.n_pairs();
    let mut a: Vec<f64> = p.iter().map(|v| -gamma * v).collect();
    let mut eye = vec![0.0; n * n];
    for i in 0..n {
        a[i * n + i] += 1.0;
        eye[i * n + i] = 1.0;
    }
    let m = solve_linear(&a, &eye, n, n)?;
    let mut resid = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let v: f64 = (0..n).map(|k| a[i * n + k] * m[k * n + j]).sum::<f64>() - eye[i * n + j];
            resid = resid.max(v.abs());
        }
    }
    if resid >= 1e-9 {
        return Err(Error::validation(format!("SR solve residual {resid:e} too large")));
    }
    Ok(SRMatrix {
        n_s: mdp.n_s,
        n_a: mdp.n_a,
        values: m,
    })
}

/// `ρ(s',a') = Σ_{s,a} μ0(s) π(a|s) M[(s,a),(s',a')]`.
pub fn occupancy_from_sr(mdp: &TabularMDP, policy: &TabularPolicy, sr: &SRMatrix) -> Result<Vec<f64>> {
    policy.check_against(mdp)?;
    if sr.n_s != mdp.n_s || sr.n_a != mdp.n_a {
        return Err(Error::validation("SR matrix does not match the MDP"));
    }
    let mu = start_pair_distribution(mdp, policy);
    let n = sr.n();
    let mut rho = vec![0.0; n];
    for (x, w) in mu.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        for (r, v) in rho.iter_mut().zip(sr.row(x)) {
            *r += w * v;
        }
    }
    Ok(rho)
}

/// Occupancy from the transposed system `(I − γP)ᵀ ρ = μ̃`, without forming `M`.
pub fn occupancy_direct(mdp: &TabularMDP, policy: &TabularPolicy, gamma: f64) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    let p = pair_transition_matrix(mdp, policy)?;
    let n = mdp.n_pairs();
    let mut at = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            at[j * n + i] = -gamma * p[i * n + j];
        }
        at[i * n + i] += 1.0;
    }
    solve_linear(&at, &start_pair_distribution(mdp, policy), n, 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyEstimate {
    pub mean: Vec<f64>,
    /// Standard error of each entry of `mean`.
    pub std_err: Vec<f64>,
    pub n_episodes: usize,
}

/// Monte-Carlo estimate of `E[Σ_t γ^t 1(s_t = s, a_t = a)]`, truncated at `horizon`.
pub fn occupancy_by_rollout(
    mdp: &TabularMDP,
    policy: &TabularPolicy,
    gamma: f64,
    horizon: usize,
    n_episodes: usize,
    rng: &mut SplitRng,
) -> Result<OccupancyEstimate> {
    check_gamma(gamma)?;
    mdp.validate()?;
    policy.check_against(mdp)?;
    if horizon == 0 || gamma.powi(horizon as i32) >= 1e-6 {
        return Err(Error::validation(format!(
            "horizon {horizon} too short for discount {gamma}"
        )));
    }
    if n_episodes == 0 {
        return Err(Error::validation("need at least one episode"));
    }
    let n = mdp.n_pairs();
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    let mut ep = vec![0.0; n];
    for _ in 0..n_episodes {
        ep.iter_mut().for_each(|v| *v = 0.0);
        let mut s = rng.categorical(&mdp.mu0);
        let mut disc = 1.0;
        for _ in 0..horizon {
            let a = policy.sample(s, rng);
            ep[mdp.pair(s, a)] += disc;
            disc *= gamma;
            s = mdp.sample_next(s, a, rng);
        }
        for i in 0..n {
            sum[i] += ep[i];
            sum_sq[i] += ep[i] * ep[i];
        }
    }
    let k = n_episodes as f64;
    let mean: Vec<f64> = sum.iter().map(|v| v / k).collect();
    let std_err = if n_episodes > 1 {
        mean.iter()
            .zip(&sum_sq)
            .map(|(m, sq)| ((sq / k - m * m).max(0.0) * k / (k - 1.0) / k).sqrt())
            .collect()
    } else {
        vec![0.0; n]
    };
    Ok(OccupancyEstimate {
        mean,
        std_err,
        n_episodes,
    })
}

/// Tabular TD(0) on one-hot pair features.
///
/// Experience comes from episodes with exploring starts: the first pair is
/// uniform over all pairs, later actions follow `policy`. Episodes last
/// `ceil(1/(1−γ))` transitions. Each pair `x` keeps a visit count `n_x` and
/// uses step size `lr / (1 + lr (1−γ) n_x)`, which averages out transition
/// noise while still contracting at the TD rate.
pub fn td_sr(
    mdp: &TabularMDP,
    policy: &TabularPolicy,
    gamma: f64,
    steps: usize,
    lr: f64,
    rng: &mut SplitRng,
) -> Result<SRMatrix> {
    check_gamma(gamma)?;
    mdp.validate()?;
    policy.check_against(mdp)?;
    if !(lr > 0.0 && lr <= 1.0) {
        return Err(Error::validation(format!("learning rate {lr} outside (0, 1]")));
    }
    let n = mdp.n_pairs();
    let ep_len = (1.0 / (1.0 - gamma)).ceil() as usize;
    let mut m = vec![0.0; n * n];
    let mut visits = vec![0usize; n];
    let mut done = 0;
    while done < steps {
        let mut s = rng.below(mdp.n_s);
        let mut a = rng.below(mdp.n_a);
        for _ in 0..ep_len {
            if done == steps {
                break;
            }
            let x = mdp.pair(s, a);
            let s2 = mdp.sample_next(s, a, rng);
            let a2 = policy.sample(s2, rng);
            let x2 = mdp.pair(s2, a2);
            let alpha = lr / (1.0 + lr * (1.0 - gamma) * visits[x] as f64);
            visits[x] += 1;
            for y in 0..n {
                let target = if y == x { 1.0 } else { 0.0 } + gamma * m[x2 * n + y];
                m[x * n + y] += alpha * (target - m[x * n + y]);
            }
            s = s2;
            a = a2;
            done += 1;
        }
    }
    Ok(SRMatrix {
        n_s: mdp.n_s,
        n_a: mdp.n_a,
        values: m,
    })
}

/// One-hot pair features `[e_s; e_a]`, one row per flattened pair.
pub fn one_hot_pair_features(n_s: usize, n_a: usize) -> Vec<Vec<f64>> {
    (0..n_s * n_a)
        .map(|x| {
            let mut f = vec![0.0; n_s + n_a];
            f[x / n_a] = 1.0;
            f[n_s + x % n_a] = 1.0;
            f
        })
        .collect()
}

/// Successor features `ψ(x) = Σ_y M[x,y] φ(y)`.
pub fn successor_features(sr: &SRMatrix, features: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = sr.n();
    if features.len() != n {
        return Err(Error::validation(format!(
            "{} feature rows for {n} pairs",
            features.len()
        )));
    }
    let d = features.first().map_or(0, Vec::len);
    Ok((0..n)
        .map(|x| {
            let mut psi = vec![0.0; d];
            for (w, f) in sr.row(x).iter().zip(features) {
                for (p, v) in psi.iter_mut().zip(f) {
                    *p += w * v;
                }
            }
            psi
        })
        .collect())
}
