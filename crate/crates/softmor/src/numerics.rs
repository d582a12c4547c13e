//! Dense linear-algebra kernels shared by every other module.
//!
//! Storage-level decompositions (SVD, symmetric eigen, LU) delegate to
//! nalgebra; the stable-invariant-subspace computation builds eigenvalue
//! reordering on top of nalgebra's real Schur form, since no ordered Schur
//! is available there. All kernels reject non-finite input up front so NaN
//! never propagates silently into a factorization.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative threshold below which singular values count as zero for rank
/// decisions.
pub const RANK_TOL: f64 = 1e-12;

/// Eigenvalues with |Re| below this absolute threshold are treated as lying
/// on the imaginary axis, making a stable/antistable split undefined.
pub const AXIS_TOL: f64 = 1e-10;

pub(crate) fn ensure_finite(m: &DMatrix<f64>, context: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { context })
    }
}

pub(crate) fn ensure_finite_vec(v: &DVector<f64>, context: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { context })
    }
}

// ── Truncated SVD ────────────────────────────────────────────────────

/// First k singular triplets of a matrix.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// Left singular vectors, one per column, orthonormal.
    pub u: DMatrix<f64>,
    /// Singular values, non-increasing, all >= 0.
    pub sigma: DVector<f64>,
    /// Right singular vectors, one per column.
    pub v: DMatrix<f64>,
}

impl SvdResult {
    /// Squared Frobenius energy discarded when truncating after the stored
    /// values is not recoverable from this struct; callers keep the full
    /// spectrum when they need tail sums.
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }
}

/// Truncated singular value decomposition keeping the `k` dominant triplets.
pub fn truncated_svd(x: &DMatrix<f64>, k: usize) -> Result<SvdResult> {
    ensure_finite(x, "truncated_svd input")?;
    let max_rank = x.nrows().min(x.ncols());
    if k == 0 || k > max_rank {
        return Err(Error::RankOutOfRange { k, max: max_rank });
    }
    let svd = x.clone().svd(true, true);
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    let (u, sigma, v) = sort_svd(u, svd.singular_values, v_t);
    Ok(SvdResult {
        u: u.columns(0, k).into_owned(),
        sigma: DVector::from_fn(k, |i, _| sigma[i]),
        v: v.columns(0, k).into_owned(),
    })
}

/// Full set of singular values, non-increasing.
pub fn singular_values(x: &DMatrix<f64>) -> Result<DVector<f64>> {
    ensure_finite(x, "singular_values input")?;
    let mut sv: Vec<f64> = x.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(DVector::from_vec(sv))
}

fn sort_svd(
    u: DMatrix<f64>,
    sigma: DVector<f64>,
    v_t: DMatrix<f64>,
) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let r = sigma.len();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| sigma[b].partial_cmp(&sigma[a]).unwrap());
    let u_sorted = DMatrix::from_fn(u.nrows(), r, |i, j| u[(i, order[j])]);
    let sigma_sorted = DVector::from_fn(r, |i, _| sigma[order[i]]);
    let v = v_t.transpose();
    let v_sorted = DMatrix::from_fn(v.nrows(), r, |i, j| v[(i, order[j])]);
    (u_sorted, sigma_sorted, v_sorted)
}

// ── Symmetric eigendecomposition ─────────────────────────────────────

/// Eigen-decomposition of a symmetric matrix, eigenvalues descending,
/// eigenvectors orthonormal columns.
pub fn sym_eig(s: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    ensure_finite(s, "sym_eig input")?;
    let norm = s.norm();
    let asym = (s - s.transpose()).norm();
    if asym > 1e-10 * norm.max(f64::MIN_POSITIVE) {
        return Err(Error::Asymmetric { rel: asym / norm });
    }
    // Symmetrize so roundoff-level asymmetry cannot bias the iteration.
    let sym = (s + s.transpose()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let values = DVector::from_fn(n, |i, _| eig.eigenvalues[order[i]]);
    let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok((values, vectors))
}

// ── SPD square root ──────────────────────────────────────────────────

/// Square root and inverse square root of a symmetric positive definite
/// matrix, both symmetric.
pub fn spd_sqrt_and_inv_sqrt(w: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (values, q) = sym_eig(w)?;
    let max = values[0];
    let min = values[values.len() - 1];
    if !(min > 1e-12 * max.max(0.0)) {
        return Err(Error::NotPositiveDefinite { min_eig: min });
    }
    let sqrt_diag = DVector::from_fn(values.len(), |i, _| values[i].sqrt());
    let inv_sqrt_diag = DVector::from_fn(values.len(), |i, _| 1.0 / values[i].sqrt());
    let w_half = &q * DMatrix::from_diagonal(&sqrt_diag) * q.transpose();
    let w_inv_half = &q * DMatrix::from_diagonal(&inv_sqrt_diag) * q.transpose();
    Ok((w_half, w_inv_half))
}

// ── Factorized solves ────────────────────────────────────────────────

/// LU factorization reusable across many right-hand sides.
pub struct Factorized {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    dim: usize,
}

impl Factorized {
    pub fn new(s: DMatrix<f64>) -> Result<Self> {
        Self::with_context(s, "factorize")
    }

    pub fn with_context(s: DMatrix<f64>, context: &'static str) -> Result<Self> {
        ensure_finite(&s, context)?;
        assert_eq!(s.nrows(), s.ncols(), "factorization requires a square matrix");
        let dim = s.nrows();
        let lu = s.lu();
        // Ratio of extreme pivots is a cheap condition proxy; rejects
        // matrices singular to working precision (condition beyond ~1e14).
        let diag = lu.u().diagonal();
        let max = diag.iter().fold(0.0f64, |acc, d| acc.max(d.abs()));
        let min = diag.iter().fold(f64::INFINITY, |acc, d| acc.min(d.abs()));
        if !(min > 1e-14 * max) || max == 0.0 {
            return Err(Error::Singular { context });
        }
        Ok(Self { lu, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve_mat(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        ensure_finite(rhs, "solve rhs")?;
        self.lu.solve(rhs).ok_or(Error::Singular { context: "solve" })
    }

    pub fn solve_vec(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_finite_vec(rhs, "solve rhs")?;
        self.lu.solve(rhs).ok_or(Error::Singular { context: "solve" })
    }
}

/// One-shot factorize-and-solve for a matrix right-hand side.
pub fn factorize_and_solve(s: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Factorized::new(s.clone())?.solve_mat(rhs)
}

/// Thin orthonormal factor of a full-column-rank matrix.
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().qr().q()
}

// ── Eigenvalues of a general real matrix ─────────────────────────────

/// Eigenvalues of a general square real matrix via the real Schur form.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    ensure_finite(m, "eigenvalues input")?;
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "eigenvalues requires a square matrix");
    if n == 0 {
        return Ok(Vec::new());
    }
    let (scale, balanced) = balance(m);
    let _ = scale;
    let schur = balanced
        .try_schur(f64::EPSILON, 0)
        .ok_or(Error::SchurNoConvergence)?;
    let (_, t) = schur.unpack();
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            let (a, b) = (t[(i, i)], t[(i, i + 1)]);
            let (c, d) = (t[(i + 1, i)], t[(i + 1, i + 1)]);
            let mean = 0.5 * (a + d);
            let disc = 0.25 * (a - d) * (a - d) + b * c;
            if disc >= 0.0 {
                let root = disc.sqrt();
                out.push(Complex::new(mean + root, 0.0));
                out.push(Complex::new(mean - root, 0.0));
            } else {
                let omega = (-disc).sqrt();
                out.push(Complex::new(mean, omega));
                out.push(Complex::new(mean, -omega));
            }
            i += 2;
        } else {
            out.push(Complex::new(t[(i, i)], 0.0));
            i += 1;
        }
    }
    Ok(out)
}

// ── Stable invariant subspace via ordered Schur ──────────────────────

/// Stable invariant subspace basis plus spectral diagnostics.
pub struct StableSubspace {
    /// Orthonormal basis, one column per stable direction.
    pub basis: DMatrix<f64>,
    /// Largest real part among the stable eigenvalues (the spectral margin
    /// of the restriction).
    pub max_real_part: f64,
}

/// Orthonormal basis of the invariant subspace belonging to all eigenvalues
/// with strictly negative real part.
///
/// The matrix is reduced to real Schur form and the quasi-triangular factor
/// is reordered by adjacent block swaps until the stable spectrum occupies
/// the leading block; the first `dim` Schur vectors then span the requested
/// subspace. Fails if any eigenvalue sits on the imaginary axis within
/// [`AXIS_TOL`], or if the stable eigenvalue count differs from `dim`.
///
/// No diagonal balancing is applied: the subspace would have to map back
/// through the scale matrix, whose condition number amplifies roundoff in
/// the Schur vectors far beyond the invariance tolerance.
pub fn ordered_schur_stable_subspace(h: &DMatrix<f64>, dim: usize) -> Result<StableSubspace> {
    ensure_finite(h, "schur input")?;
    let n = h.nrows();
    assert_eq!(n, h.ncols(), "stable subspace requires a square matrix");
    assert!(dim >= 1 && dim <= n, "subspace dimension out of range");
    let h_norm = h.norm();

    let schur = h
        .clone()
        .try_schur(f64::EPSILON, 0)
        .ok_or(Error::SchurNoConvergence)?;
    let (mut q, mut t) = schur.unpack();

    let mut work = SimilarityWork::new(n);
    split_real_blocks(&mut t, &mut q, &mut work);

    let mut blocks = scan_blocks(&t);
    let mut stable_count = 0usize;
    let mut margin = f64::NEG_INFINITY;
    for b in &mut blocks {
        let re = block_real_part(&t, b.start, b.size);
        if re.abs() <= AXIS_TOL {
            return Err(Error::ImaginaryAxisEigenvalue { real_part: re });
        }
        b.stable = re < 0.0;
        if b.stable {
            stable_count += b.size;
            margin = margin.max(re);
        }
    }
    if stable_count != dim {
        return Err(Error::StableSubspaceDimension { found: stable_count, expected: dim });
    }

    reorder_stable_to_top(&mut t, &mut q, &mut blocks, &mut work)?;

    let u = q.columns(0, dim).into_owned();

    let hu = h * &u;
    let restriction = u.transpose() * &hu;
    let residual = (&hu - &u * &restriction).norm();
    let tol = 1e-8 * h_norm;
    if residual > tol {
        return Err(Error::InvarianceResidual { residual, tol });
    }
    Ok(StableSubspace { basis: u, max_real_part: margin })
}

/// Solve the continuous Lyapunov equation `A^T X + X A + W = 0` for a
/// matrix `A` whose spectrum lies strictly in the open left half-plane.
///
/// Bartels-Stewart: reduce `A` to real Schur form, back-substitute over the
/// quasi-triangular block structure, then run one pass of iterative
/// refinement on the residual reusing the same factorization. The
/// refinement matters for stiff closed-loop matrices whose margin is tiny
/// relative to the norm. Used as the inner solve of the Newton polish in
/// the Riccati solver.
pub fn lyapunov(a: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_finite(a, "lyapunov A")?;
    ensure_finite(w, "lyapunov W")?;
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    assert_eq!(n, w.nrows());
    assert_eq!(n, w.ncols());
    let schur = a
        .clone()
        .try_schur(f64::EPSILON, 0)
        .ok_or(Error::SchurNoConvergence)?;
    let (q, t) = schur.unpack();
    let blocks = scan_blocks(&t);

    let mut x = lyapunov_with_schur(&q, &t, &blocks, w)?;
    for _ in 0..2 {
        let resid = a.transpose() * &x + &x * a + w;
        let correction = lyapunov_with_schur(&q, &t, &blocks, &resid)?;
        let improved = &x + &correction;
        let new_resid = (a.transpose() * &improved + &improved * a + w).norm();
        if new_resid >= resid.norm() {
            break;
        }
        x = improved;
    }
    Ok((&x + x.transpose()) * 0.5)
}

/// Inner Bartels-Stewart back-substitution with a precomputed Schur form.
///
/// Works on flat column-major slices; the block loops are allocation-free,
/// which matters because this runs inside the Newton polish of the Riccati
/// solver at full order.
fn lyapunov_with_schur(
    q: &DMatrix<f64>,
    t: &DMatrix<f64>,
    blocks: &[Block],
    w: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = t.nrows();
    let wt = q.transpose() * w * q;
    let td = t.as_slice();
    let wd = wt.as_slice();
    // Column-major storage of the transformed solution.
    let mut y = vec![0.0f64; n * n];
    let mut rhs = [0.0f64; 4];
    let mut rhs_cols = [0.0f64; 4];

    // Solve T^T Y + Y T = -Wt block column by block column; T upper
    // quasi-triangular means every block column only references earlier
    // ones on the right-multiplication side, and T^T is lower triangular
    // over block rows.
    for bj in blocks {
        let (j0, sj) = (bj.start, bj.size);
        for bi in blocks {
            let (i0, si) = (bi.start, bi.size);
            // local = -Wt[i, j] - (Y T)[i, j] part from columns k < j0
            //         - (T^T Y)[i, j] part from rows k < i0
            for c in 0..sj {
                let jc = j0 + c;
                let y_col_base = jc * n;
                for r in 0..si {
                    let ir = i0 + r;
                    let mut acc = -wd[jc * n + ir];
                    // sum_k<j0 Y[ir, k] * T[k, jc]
                    let t_col = &td[jc * n..jc * n + j0];
                    for (k, tv) in t_col.iter().enumerate() {
                        acc -= y[k * n + ir] * tv;
                    }
                    // sum_k<i0 T[k, ir] * Y[k, jc]
                    let t_col_i = &td[ir * n..ir * n + i0];
                    let y_col = &y[y_col_base..y_col_base + i0];
                    let mut dot = 0.0;
                    for k in 0..i0 {
                        dot += t_col_i[k] * y_col[k];
                    }
                    rhs[c * si + r] = acc - dot;
                }
            }
            // Solve T_ii^T Z + Z T_jj = local for the (si x sj) block.
            let mut small = [[0.0f64; 4]; 4];
            for col in 0..sj {
                for row in 0..si {
                    let eq = col * si + row;
                    for k in 0..si {
                        small[eq][col * si + k] += td[(i0 + row) * n + i0 + k];
                    }
                    for k in 0..sj {
                        small[eq][k * si + row] += td[(j0 + col) * n + j0 + k];
                    }
                }
            }
            let m = si * sj;
            rhs_cols[..m].copy_from_slice(&rhs[..m]);
            solve_tiny(&mut small, &mut rhs_cols[..m])?;
            for col in 0..sj {
                for row in 0..si {
                    y[(j0 + col) * n + i0 + row] = rhs_cols[col * si + row];
                }
            }
        }
    }
    let y = DMatrix::from_vec(n, n, y);
    Ok(q * y * q.transpose())
}

/// Gaussian elimination with partial pivoting for systems of size <= 4.
fn solve_tiny(a: &mut [[f64; 4]; 4], b: &mut [f64]) -> Result<()> {
    let m = b.len();
    for col in 0..m {
        let mut piv = col;
        for r in col + 1..m {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        if a[piv][col] == 0.0 {
            return Err(Error::Singular { context: "lyapunov block" });
        }
        if piv != col {
            a.swap(piv, col);
            b.swap(piv, col);
        }
        let d = a[col][col];
        for r in col + 1..m {
            let f = a[r][col] / d;
            if f != 0.0 {
                for c in col..m {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    for col in (0..m).rev() {
        let mut acc = b[col];
        for c in col + 1..m {
            acc -= a[col][c] * b[c];
        }
        b[col] = acc / a[col][col];
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
struct Block {
    start: usize,
    size: usize,
    stable: bool,
}

fn scan_blocks(t: &DMatrix<f64>) -> Vec<Block> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        let size = if i + 1 < n && t[(i + 1, i)] != 0.0 { 2 } else { 1 };
        blocks.push(Block { start: i, size, stable: false });
        i += size;
    }
    blocks
}

fn block_real_part(t: &DMatrix<f64>, start: usize, size: usize) -> f64 {
    if size == 1 {
        t[(start, start)]
    } else {
        0.5 * (t[(start, start)] + t[(start + 1, start + 1)])
    }
}

/// Column scratch reused by every block similarity application, so the hot
/// reorder loop performs no allocation.
struct SimilarityWork {
    cols: DMatrix<f64>,
}

impl SimilarityWork {
    fn new(n: usize) -> Self {
        Self { cols: DMatrix::zeros(n, 4) }
    }
}

/// Rotate any 2x2 diagonal block with real eigenvalues into two 1x1 blocks.
fn split_real_blocks(t: &mut DMatrix<f64>, q: &mut DMatrix<f64>, work: &mut SimilarityWork) {
    let n = t.nrows();
    let mut i = 0;
    while i + 1 < n {
        if t[(i + 1, i)] == 0.0 {
            i += 1;
            continue;
        }
        let (a, b) = (t[(i, i)], t[(i, i + 1)]);
        let (c, d) = (t[(i + 1, i)], t[(i + 1, i + 1)]);
        let disc = 0.25 * (a - d) * (a - d) + b * c;
        if disc < 0.0 {
            i += 2;
            continue;
        }
        // Real eigenvalues: rotate so the eigenvector of one of them spans
        // the first coordinate of the block.
        let mean = 0.5 * (a + d);
        let root = disc.sqrt();
        let lambda = if mean >= 0.0 { mean + root } else { mean - root };
        // (B - lambda I) v = 0; pick the better-conditioned row.
        let v = if b.abs() + (lambda - a).abs() >= c.abs() + (lambda - d).abs() {
            [b, lambda - a]
        } else {
            [lambda - d, c]
        };
        let norm = (v[0] * v[0] + v[1] * v[1]).sqrt();
        if norm == 0.0 {
            i += 2;
            continue;
        }
        let (cg, sg) = (v[0] / norm, v[1] / norm);
        let rot = DMatrix::from_row_slice(2, 2, &[cg, -sg, sg, cg]);
        apply_block_similarity(t, q, i, &rot, work);
        t[(i + 1, i)] = 0.0;
        i += 2;
    }
}

/// Apply the orthogonal similarity defined by `g` on coordinates
/// `[i, i + s)` to the quasi-triangular factor and accumulate it in `q`.
fn apply_block_similarity(
    t: &mut DMatrix<f64>,
    q: &mut DMatrix<f64>,
    i: usize,
    g: &DMatrix<f64>,
    work: &mut SimilarityWork,
) {
    let n = t.nrows();
    let s = g.nrows();
    // Row block: T[i..i+s, i..n] <- G^T * T[i..i+s, i..n], column by column
    // (the s entries of each column are contiguous in memory).
    let mut tmp = [0.0f64; 4];
    for j in i..n {
        for (r, slot) in tmp.iter_mut().enumerate().take(s) {
            let mut acc = 0.0;
            for k in 0..s {
                acc += g[(k, r)] * t[(i + k, j)];
            }
            *slot = acc;
        }
        for (r, slot) in tmp.iter().enumerate().take(s) {
            t[(i + r, j)] = *slot;
        }
    }
    // Column block: T[0..i+s, i..i+s] <- T[0..i+s, i..i+s] * G.
    let rows = i + s;
    for k in 0..s {
        for r in 0..rows {
            work.cols[(r, k)] = t[(r, i + k)];
        }
    }
    for c in 0..s {
        for r in 0..rows {
            let mut acc = 0.0;
            for k in 0..s {
                acc += work.cols[(r, k)] * g[(k, c)];
            }
            t[(r, i + c)] = acc;
        }
    }
    // Schur vectors: Q[:, i..i+s] <- Q[:, i..i+s] * G.
    for k in 0..s {
        for r in 0..n {
            work.cols[(r, k)] = q[(r, i + k)];
        }
    }
    for c in 0..s {
        for r in 0..n {
            let mut acc = 0.0;
            for k in 0..s {
                acc += work.cols[(r, k)] * g[(k, c)];
            }
            q[(r, i + c)] = acc;
        }
    }
}

/// Bubble every stable block above all antistable ones, preserving the
/// relative order within each class.
fn reorder_stable_to_top(
    t: &mut DMatrix<f64>,
    q: &mut DMatrix<f64>,
    blocks: &mut [Block],
    work: &mut SimilarityWork,
) -> Result<()> {
    let mut settled = 0;
    for j in 0..blocks.len() {
        if !blocks[j].stable {
            continue;
        }
        let mut k = j;
        while k > settled {
            let upper = blocks[k - 1];
            let lower = blocks[k];
            swap_adjacent_blocks(t, q, upper.start, upper.size, lower.size, work)?;
            blocks[k - 1] = Block { start: upper.start, size: lower.size, stable: lower.stable };
            blocks[k] =
                Block { start: upper.start + lower.size, size: upper.size, stable: upper.stable };
            k -= 1;
        }
        settled += 1;
    }
    Ok(())
}

/// Swap two adjacent diagonal blocks of the real Schur factor using the
/// direct orthogonal swap (solve the small Sylvester equation, then QR).
fn swap_adjacent_blocks(
    t: &mut DMatrix<f64>,
    q: &mut DMatrix<f64>,
    i: usize,
    p: usize,
    r: usize,
    work: &mut SimilarityWork,
) -> Result<()> {
    let s = p + r;
    let a11 = t.view((i, i), (p, p)).into_owned();
    let a12 = t.view((i, i + p), (p, r)).into_owned();
    let a22 = t.view((i + p, i + p), (r, r)).into_owned();
    let block_norm = (a11.norm_squared() + a12.norm_squared() + a22.norm_squared()).sqrt();

    // Solve A11 X - X A22 = A12 as a Kronecker system (at most 4x4).
    let mut kron = DMatrix::zeros(p * r, p * r);
    for col in 0..r {
        for row in 0..p {
            let eq = col * p + row;
            for k in 0..p {
                kron[(eq, col * p + k)] += a11[(row, k)];
            }
            for k in 0..r {
                kron[(eq, k * p + row)] -= a22[(k, col)];
            }
        }
    }
    let rhs = DVector::from_fn(p * r, |idx, _| a12[(idx % p, idx / p)]);
    let x = kron
        .full_piv_lu()
        .solve(&rhs)
        .ok_or(Error::SwapRejected { residual: f64::INFINITY })?;

    // Orthonormal basis of [-X; I], completed to a full orthogonal factor.
    let mut w = DMatrix::zeros(s, r);
    for col in 0..r {
        for row in 0..p {
            w[(row, col)] = -x[col * p + row];
        }
        w[(p + col, col)] = 1.0;
    }
    let g = complete_orthogonal(&w);

    let mut block = DMatrix::zeros(s, s);
    block.view_mut((0, 0), (p, p)).copy_from(&a11);
    block.view_mut((0, p), (p, r)).copy_from(&a12);
    block.view_mut((p, p), (r, r)).copy_from(&a22);
    let swapped = g.transpose() * &block * &g;

    // The (2,1) block must vanish for the swap to be trustworthy. The
    // direct swap keeps it at roundoff level even for badly separated
    // eigenvalues, so anything materially above that is rejected rather
    // than silently zeroed.
    let mut residual = 0.0f64;
    for row in r..s {
        for col in 0..r {
            residual = residual.max(swapped[(row, col)].abs());
        }
    }
    if residual > 100.0 * f64::EPSILON * block_norm.max(f64::MIN_POSITIVE) {
        return Err(Error::SwapRejected { residual });
    }

    apply_block_similarity(t, q, i, &g, work);
    for row in r..s {
        for col in 0..r {
            t[(i + row, i + col)] = 0.0;
        }
    }
    Ok(())
}

/// Complete the orthonormalized columns of `w` to a full orthogonal matrix.
fn complete_orthogonal(w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = w.nrows();
    let k = w.ncols();
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(n);
    for j in 0..k {
        let mut v = w.column(j).into_owned();
        for _ in 0..2 {
            for c in &cols {
                let proj = c.dot(&v);
                v -= c * proj;
            }
        }
        let norm = v.norm();
        debug_assert!(norm > 0.0, "swap basis must have full column rank");
        cols.push(v / norm);
    }
    for e in 0..n {
        if cols.len() == n {
            break;
        }
        let mut v = DVector::zeros(n);
        v[e] = 1.0;
        for _ in 0..2 {
            for c in &cols {
                let proj = c.dot(&v);
                v -= c * proj;
            }
        }
        let norm = v.norm();
        if norm > 0.5 {
            cols.push(v / norm);
        }
    }
    debug_assert_eq!(cols.len(), n);
    DMatrix::from_columns(&cols)
}

/// Diagonal balancing (powers of two) to equalize row and column norms.
///
/// Returns the diagonal scale `d` and the balanced matrix `D^-1 M D`; an
/// invariant subspace basis of the balanced matrix maps back through
/// row-wise multiplication by `d`.
fn balance(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    const RADIX: f64 = 2.0;
    let n = m.nrows();
    let mut a = m.clone();
    let mut d = vec![1.0f64; n];
    if n < 2 {
        return (d, a);
    }
    loop {
        let mut converged = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= RADIX;
            }
            let g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= RADIX;
            }
            if (c + r / f) < 0.95 * s && f != 1.0 {
                converged = false;
                d[i] *= f;
                let inv_f = 1.0 / f;
                for j in 0..n {
                    a[(i, j)] *= inv_f;
                }
                for j in 0..n {
                    a[(j, i)] *= f;
                }
            }
        }
        if converged {
            break;
        }
    }
    (d, a)
}
