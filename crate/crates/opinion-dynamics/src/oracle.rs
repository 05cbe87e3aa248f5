//! Independent reference machinery: a dense eigensolver, a doubled-system
//! simulator, a long-horizon outcome classifier, and a seeded fixture
//! generator. The verification suites cross-check the main code paths
//! against these routes, so they deliberately avoid sharing implementation
//! with the operators they validate.

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bounded_confidence::{build_h, confidence_neighbors, ConfidenceConfig};
use crate::error::{Error, Result};
use crate::network::InfluenceNetwork;

/// Dense spectral routines refuse matrices larger than this.
pub const MAX_DENSE_N: usize = 64;

/// Eigenvalues within this of the unit circle count as lying on it.
pub const UNIT_CIRCLE_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct SpectralReport {
    /// All eigenvalues, sorted by real part then imaginary part.
    pub eigenvalues: Vec<Complex<f64>>,
    pub spectral_radius: f64,
    /// Eigenvalues with modulus at least `1 - UNIT_CIRCLE_TOL`.
    pub unit_circle: Vec<Complex<f64>>,
}

fn sorted_eigenvalues(mut vals: Vec<Complex<f64>>) -> Vec<Complex<f64>> {
    vals.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap()
            .then(a.im.partial_cmp(&b.im).unwrap())
    });
    vals
}

fn schur_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    // An exactly zero row or column carries eigenvalue 0 and deflates to the
    // complementary principal submatrix (cofactor expansion along that line).
    // Stubborn agents zero out whole rows, and the QR iteration can stall on
    // those, so peel them off before iterating.
    let zero_line: Vec<bool> = (0..n)
        .map(|i| m.row(i).iter().all(|&e| e == 0.0) || m.column(i).iter().all(|&e| e == 0.0))
        .collect();
    if zero_line.iter().any(|&z| z) {
        let keep: Vec<usize> = (0..n).filter(|&i| !zero_line[i]).collect();
        let core = DMatrix::from_fn(keep.len(), keep.len(), |i, j| m[(keep[i], keep[j])]);
        let mut vals = schur_eigenvalues(&core)?;
        vals.resize(n, Complex::new(0.0, 0.0));
        return Ok(vals);
    }
    // Retry with a relaxing tolerance; even the loosest rung is far tighter
    // than any downstream comparison.
    for (eps, extra) in [(f64::EPSILON, 1), (1e-14, 4), (1e-12, 16)] {
        let budget = (200 * n * n + 1000) * extra;
        if let Some(schur) = nalgebra::linalg::Schur::try_new(m.clone(), eps, budget) {
            return Ok(schur.complex_eigenvalues().iter().copied().collect());
        }
    }
    Err(Error::EigensolverFailure { n })
}

/// Full spectrum of a square matrix of order at most `MAX_DENSE_N`.
pub fn eigenvalues_dense(m: &DMatrix<f64>) -> Result<SpectralReport> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: format!("spectrum of a {}x{} matrix", n, m.ncols()),
        });
    }
    if n > MAX_DENSE_N {
        return Err(Error::TooLarge {
            n,
            limit: MAX_DENSE_N,
        });
    }
    let eigenvalues = sorted_eigenvalues(schur_eigenvalues(m)?);
    let spectral_radius = eigenvalues.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let unit_circle = eigenvalues
        .iter()
        .copied()
        .filter(|l| l.norm() >= 1.0 - UNIT_CIRCLE_TOL)
        .collect();
    Ok(SpectralReport {
        eigenvalues,
        spectral_radius,
        unit_circle,
    })
}

/// Monic characteristic polynomial coefficients `[1, c1, ..., cn]` in
/// descending powers, via the trace recursion `M_{k+1} = A (M_k + c_k I)`,
/// `c_{k+1} = -tr(M_{k+1}) / (k+1)`. Pure matrix arithmetic, no
/// eigendecomposition, so it serves as an independent route to the spectrum.
pub fn char_poly(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut coeffs = vec![1.0];
    let mut mk = DMatrix::<f64>::zeros(n, n);
    let mut ck = 1.0;
    for k in 1..=n {
        for i in 0..n {
            mk[(i, i)] += ck;
        }
        mk = m * mk;
        ck = -mk.trace() / k as f64;
        coeffs.push(ck);
    }
    coeffs
}

/// Roots of a monic polynomial given in descending powers, as the
/// eigenvalues of its companion matrix.
pub fn companion_roots(coeffs: &[f64]) -> Result<Vec<Complex<f64>>> {
    let n = coeffs.len() - 1;
    if n == 0 {
        return Ok(Vec::new());
    }
    let lead = coeffs[0];
    let mut c = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        c[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        c[(i, n - 1)] = -coeffs[n - i] / lead;
    }
    Ok(sorted_eigenvalues(schur_eigenvalues(&c)?))
}

/// Whether two complex multisets match pairwise within `tol`.
pub fn multisets_match(a: &[Complex<f64>], b: &[Complex<f64>], tol: f64) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut used = vec![false; b.len()];
    for va in a {
        let mut found = false;
        for (j, vb) in b.iter().enumerate() {
            if !used[j] && (va - vb).norm() <= tol {
                used[j] = true;
                found = true;
                break;
            }
        }
        if !found {
            return false;
        }
    }
    true
}

/// Runs the dynamics through the doubled system that carries the anchors as
/// frozen extra coordinates, returning the opinion block at every step
/// `0..=k`. Built and iterated verbatim as a `2n x 2n` matrix, independent of
/// the per-step implementation it validates.
pub fn simulate_augmented(
    net: &InfluenceNetwork,
    x0: &DVector<f64>,
    k: usize,
) -> Result<Vec<DVector<f64>>> {
    let n = net.n();
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            what: format!("x0 has {} entries, expected {n}", x0.len()),
        });
    }
    let mut big = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        big[(i, i)] = 1.0;
        big[(n + i, i)] = 1.0 - net.xi()[i];
    }
    let xi_w = net.xi_w();
    for i in 0..n {
        for j in 0..n {
            big[(n + i, n + j)] = xi_w[(i, j)];
        }
    }
    let mut state = DVector::<f64>::zeros(2 * n);
    for i in 0..n {
        state[i] = x0[i];
        state[n + i] = x0[i];
    }
    let mut out = vec![x0.clone()];
    for _ in 0..k {
        state = &big * &state;
        out.push(DVector::from_fn(n, |i, _| state[n + i]));
    }
    Ok(out)
}

/// What a long-horizon run concluded.
#[derive(Debug, Clone, PartialEq)]
pub enum OutcomeLabel {
    Converges,
    Oscillates,
    Consensus { value: f64 },
    Clusters { count: usize },
    BudgetExhausted,
}

/// Which dynamics to run to the horizon.
#[derive(Debug, Clone)]
pub enum DynamicsMode {
    SingleIssue,
    IssueSequence,
    BoundedConfidence(ConfidenceConfig),
}

#[derive(Debug, Clone)]
pub struct BruteOptions {
    pub budget: usize,
    /// Step tolerance for settling.
    pub tol: f64,
    pub consensus_tol: f64,
    pub cluster_tol: f64,
}

impl Default for BruteOptions {
    fn default() -> Self {
        BruteOptions {
            budget: 100_000,
            tol: 1e-10,
            consensus_tol: 1e-6,
            cluster_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BruteOutcome {
    pub label: OutcomeLabel,
    pub final_state: DVector<f64>,
    pub steps: usize,
}

/// Classifies the long-run behavior by direct iteration.
///
/// For issue sequences the per-issue settling is itself done by iterating the
/// within-issue step to a tight tolerance, never by applying the limit
/// operator, so this stays an independent route. Oscillation is recognized by
/// comparing the state at doubling checkpoints k and 2k: a persistent orbit
/// either returns to the checkpoint exactly (period divides k) or keeps a
/// non-decaying distance from it, while a converging run does neither.
pub fn brute_force_outcome(
    net: &InfluenceNetwork,
    x0: &DVector<f64>,
    mode: &DynamicsMode,
    opts: &BruteOptions,
) -> Result<BruteOutcome> {
    match mode {
        DynamicsMode::SingleIssue => single_issue_horizon(net, x0, opts),
        DynamicsMode::IssueSequence => sequence_horizon(net, x0, None, opts),
        DynamicsMode::BoundedConfidence(cfg) => sequence_horizon(net, x0, Some(cfg), opts),
    }
}

fn single_issue_horizon(
    net: &InfluenceNetwork,
    x0: &DVector<f64>,
    opts: &BruteOptions,
) -> Result<BruteOutcome> {
    let w = net.w();
    let xi = net.xi();
    let n = net.n();
    let mut x = x0.clone();
    let mut snapshot = x.clone();
    let mut snapshot_k = 0usize;
    let mut prev_checkpoint_diff = f64::INFINITY;
    let mut step = f64::INFINITY;
    for k in 1..=opts.budget {
        let averaged = w * &x;
        let next = DVector::from_fn(n, |i, _| xi[i] * averaged[i] + (1.0 - xi[i]) * x0[i]);
        step = (&next - &x).amax();
        x = next;
        if step <= opts.tol {
            return Ok(BruteOutcome {
                label: OutcomeLabel::Converges,
                final_state: x,
                steps: k,
            });
        }
        if snapshot_k > 0 && k == 2 * snapshot_k {
            let dist = (&x - &snapshot).amax();
            // Exact return while still moving: the orbit is periodic.
            if k >= 8 && dist <= 10.0 * opts.tol {
                return Ok(BruteOutcome {
                    label: OutcomeLabel::Oscillates,
                    final_state: x,
                    steps: k,
                });
            }
            // Two checkpoints with non-decaying displacement: a rotation
            // whose period does not divide the checkpoint index.
            if k >= 256 && dist > 10.0 * opts.tol && dist >= 0.5 * prev_checkpoint_diff {
                return Ok(BruteOutcome {
                    label: OutcomeLabel::Oscillates,
                    final_state: x,
                    steps: k,
                });
            }
            prev_checkpoint_diff = dist;
        }
        if snapshot_k == 0 || k == 2 * snapshot_k {
            snapshot = x.clone();
            snapshot_k = k;
        }
    }
    let label = if step > opts.tol && prev_checkpoint_diff <= 10.0 * opts.tol {
        OutcomeLabel::Oscillates
    } else {
        OutcomeLabel::BudgetExhausted
    };
    Ok(BruteOutcome {
        label,
        final_state: x,
        steps: opts.budget,
    })
}

/// Settles one issue by plain iteration. Errors if the inner loop never
/// settles, which the callers treat as a budget failure.
fn settle_inner(net: &InfluenceNetwork, x0: &DVector<f64>) -> Option<DVector<f64>> {
    let w = net.w();
    let xi = net.xi();
    let n = net.n();
    let mut x = x0.clone();
    for _ in 0..1_000_000 {
        let averaged = w * &x;
        let next = DVector::from_fn(n, |i, _| xi[i] * averaged[i] + (1.0 - xi[i]) * x0[i]);
        let step = (&next - &x).amax();
        x = next;
        if step <= 1e-14 {
            return Some(x);
        }
    }
    None
}

fn sequence_horizon(
    net: &InfluenceNetwork,
    x00: &DVector<f64>,
    cfg: Option<&ConfidenceConfig>,
    opts: &BruteOptions,
) -> Result<BruteOutcome> {
    let mut x = x00.clone();
    for s in 1..=opts.budget {
        let settled = match settle_inner(net, &x) {
            Some(v) => v,
            None => {
                return Ok(BruteOutcome {
                    label: OutcomeLabel::BudgetExhausted,
                    final_state: x,
                    steps: s - 1,
                })
            }
        };
        let next = match cfg {
            None => settled,
            Some(cfg) => {
                let neighbors = confidence_neighbors(&settled, cfg.d);
                let h = build_h(&neighbors, cfg.h)?;
                &h * &settled
            }
        };
        let diff = (&next - &x).amax();
        x = next;
        if diff <= 1e-12 {
            let label = classify_spread(&x, opts.consensus_tol, opts.cluster_tol);
            return Ok(BruteOutcome {
                label,
                final_state: x,
                steps: s,
            });
        }
    }
    Ok(BruteOutcome {
        label: OutcomeLabel::BudgetExhausted,
        final_state: x,
        steps: opts.budget,
    })
}

fn classify_spread(x: &DVector<f64>, consensus_tol: f64, cluster_tol: f64) -> OutcomeLabel {
    let max = x.max();
    let min = x.min();
    if max - min <= consensus_tol {
        return OutcomeLabel::Consensus {
            value: x.mean(),
        };
    }
    let mut vals: Vec<f64> = x.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut count = 1;
    for pair in vals.windows(2) {
        if pair[1] - pair[0] > cluster_tol {
            count += 1;
        }
    }
    OutcomeLabel::Clusters { count }
}

/// Class-probability mix for the fixture generator; the remainder is the
/// non-stubborn share.
#[derive(Debug, Clone, Copy)]
pub struct ClassMix {
    pub fully: f64,
    pub partially: f64,
}

impl ClassMix {
    pub fn new(fully: f64, partially: f64) -> Self {
        ClassMix { fully, partially }
    }
}

/// Deterministic random network: every row keeps at least one positive
/// entry, weights are drawn in [0.25, 1) and row-normalized, and each agent's
/// class is drawn from `mix` with partially stubborn susceptibilities uniform
/// in (0.05, 0.95). Identical `(n, density, mix, seed)` always produce the
/// identical network.
pub fn random_network(n: usize, density: f64, mix: ClassMix, seed: u64) -> InfluenceNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = vec![vec![0.0; n]; n];
    for row in w.iter_mut() {
        for e in row.iter_mut() {
            if rng.random::<f64>() < density {
                *e = rng.random_range(0.25..1.0);
            }
        }
        if row.iter().all(|&v| v == 0.0) {
            row[rng.random_range(0..n)] = 1.0;
        }
        let sum: f64 = row.iter().sum();
        for e in row.iter_mut() {
            *e /= sum;
        }
    }
    let mut xi = vec![0.0; n];
    for v in xi.iter_mut() {
        let c = rng.random::<f64>();
        *v = if c < mix.fully {
            0.0
        } else if c < mix.fully + mix.partially {
            rng.random_range(0.05..0.95)
        } else {
            1.0
        };
    }
    InfluenceNetwork::new(w, xi).expect("generated network is valid by construction")
}

/// Block-diagonal union of two networks; useful for forcing several
/// independent components.
pub fn disjoint_union(a: &InfluenceNetwork, b: &InfluenceNetwork) -> InfluenceNetwork {
    let (na, nb) = (a.n(), b.n());
    let n = na + nb;
    let mut w = vec![vec![0.0; n]; n];
    let mut xi = vec![0.0; n];
    for i in 0..na {
        for j in 0..na {
            w[i][j] = a.w()[(i, j)];
        }
        xi[i] = a.xi()[i];
    }
    for i in 0..nb {
        for j in 0..nb {
            w[na + i][na + j] = b.w()[(i, j)];
        }
        xi[na + i] = b.xi()[i];
    }
    InfluenceNetwork::new(w, xi).expect("union of valid networks is valid")
}

/// Seeded initial opinions, uniform in (-1, 1).
pub fn random_opinions(n: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}
