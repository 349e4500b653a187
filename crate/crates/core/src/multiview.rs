//! Block-diagonal kernel operators, the block metric and the multi-view
//! kernel `K = H A H`.

use nalgebra::{DMatrix, DMatrixView, DVector};

use crate::error::{input, MvmlError, Result};
use crate::kernels::{gram, GramMatrix, KernelConfig};
use crate::linalg::{frobenius_sq, pinv_sym};

/// Block-diagonal matrix with `v` blocks of identical shape `rows × cols`.
///
/// Stands for both `H = blockdiag(K_1, …, K_v)` (square blocks) and the
/// Nyström factor `U = blockdiag(U_1, …, U_v)` (`n × p` blocks). The zero
/// pattern is never materialised.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDiag {
    blocks: Vec<DMatrix<f64>>,
}

impl BlockDiag {
    pub fn new(blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = blocks.first() else {
            return input("block-diagonal operator needs at least one block");
        };
        let shape = first.shape();
        if let Some((l, b)) = blocks.iter().enumerate().find(|(_, b)| b.shape() != shape) {
            return input(format!(
                "block {l} has shape {:?}, expected {:?}",
                b.shape(),
                shape
            ));
        }
        Ok(Self { blocks })
    }

    pub fn views(&self) -> usize {
        self.blocks.len()
    }

    /// Rows per block (`n`).
    pub fn block_rows(&self) -> usize {
        self.blocks[0].nrows()
    }

    /// Columns per block (`n` for `H`, `p` for `U`).
    pub fn block_cols(&self) -> usize {
        self.blocks[0].ncols()
    }

    /// Column dimension of the whole operator, `v · block_cols`.
    pub fn dim(&self) -> usize {
        self.views() * self.block_cols()
    }

    pub fn block(&self, l: usize) -> &DMatrix<f64> {
        &self.blocks[l]
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    /// `B x` for a stacked vector `x` of length `v · block_cols`.
    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let c = self.block_cols();
        if x.len() != self.dim() {
            return input(format!(
                "vector has length {}, operator expects {}",
                x.len(),
                self.dim()
            ));
        }
        let r = self.block_rows();
        let mut out = DVector::zeros(r * self.views());
        for (l, b) in self.blocks.iter().enumerate() {
            let xl = x.rows(l * c, c);
            out.rows_mut(l * r, r).copy_from(&(b * xl));
        }
        Ok(out)
    }

    /// `(wᵀ ⊗ I) B`, the `rows × v·cols` matrix `[w_1 B_1, …, w_v B_v]`.
    pub fn combined(&self, w: &DVector<f64>) -> Result<DMatrix<f64>> {
        if w.len() != self.views() {
            return input(format!(
                "weight vector has length {}, expected {}",
                w.len(),
                self.views()
            ));
        }
        let c = self.block_cols();
        let mut m = DMatrix::zeros(self.block_rows(), self.dim());
        for (l, b) in self.blocks.iter().enumerate() {
            m.columns_mut(l * c, c).copy_from(&(b * w[l]));
        }
        Ok(m)
    }

    /// Dense copy, for tests and small diagnostics only.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let (r, c) = (self.block_rows(), self.block_cols());
        let v = self.views();
        let mut d = DMatrix::zeros(r * v, c * v);
        for (l, b) in self.blocks.iter().enumerate() {
            d.view_mut((l * r, l * c), (r, c)).copy_from(b);
        }
        d
    }
}

/// The per-view Gram matrices, i.e. `H = blockdiag(K_1, …, K_v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramStack {
    inner: BlockDiag,
}

impl GramStack {
    pub fn from_grams(grams: Vec<GramMatrix>) -> Result<Self> {
        let blocks: Vec<_> = grams.into_iter().map(GramMatrix::into_matrix).collect();
        if let Some(first) = blocks.first() {
            let n = first.nrows();
            if let Some((l, b)) = blocks.iter().enumerate().find(|(_, b)| b.nrows() != n) {
                return input(format!(
                    "view {l} has {} samples, view 0 has {n}",
                    b.nrows()
                ));
            }
        }
        Ok(Self {
            inner: BlockDiag::new(blocks)?,
        })
    }

    pub fn n(&self) -> usize {
        self.inner.block_rows()
    }

    pub fn views(&self) -> usize {
        self.inner.views()
    }

    pub fn block(&self, l: usize) -> &DMatrix<f64> {
        self.inner.block(l)
    }

    pub fn as_block_diag(&self) -> &BlockDiag {
        &self.inner
    }
}

/// Computes one Gram matrix per view.
pub fn build_gram_stack(views: &[DMatrix<f64>], configs: &[KernelConfig]) -> Result<GramStack> {
    if views.is_empty() {
        return input("dataset has no views");
    }
    if views.len() != configs.len() {
        return input(format!(
            "{} views but {} kernel configurations",
            views.len(),
            configs.len()
        ));
    }
    let n = views[0].nrows();
    if let Some((l, x)) = views.iter().enumerate().find(|(_, x)| x.nrows() != n) {
        return input(format!(
            "view {l} has {} samples, view 0 has {n}",
            x.nrows()
        ));
    }
    let grams = views
        .iter()
        .zip(configs)
        .map(|(x, cfg)| gram(cfg, x))
        .collect::<Result<Vec<_>>>()?;
    GramStack::from_grams(grams)
}

/// One group of the block-sparsity penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Group {
    /// The diagonal block `(l, l)`.
    Diagonal(usize),
    /// Both off-diagonal blocks `(l, m)` and `(m, l)`, stored with `l < m`.
    Pair(usize, usize),
}

impl Group {
    /// The `(row block, column block)` coordinates covered by the group.
    pub fn blocks(&self) -> Vec<(usize, usize)> {
        match *self {
            Group::Diagonal(l) => vec![(l, l)],
            Group::Pair(l, m) => vec![(l, m), (m, l)],
        }
    }
}

impl std::fmt::Display for Group {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Group::Diagonal(l) => write!(f, "({l},{l})"),
            Group::Pair(l, m) => write!(f, "({l},{m})+({m},{l})"),
        }
    }
}

/// Partition of the `v × v` block grid into view-combination groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupLayout {
    views: usize,
    groups: Vec<Group>,
}

impl GroupLayout {
    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn views(&self) -> usize {
        self.views
    }

    pub fn contains(&self, g: &Group) -> bool {
        self.groups.contains(g)
    }
}

/// `v` diagonal groups followed by the `v(v−1)/2` symmetric pairs.
pub fn group_layout(views: usize) -> Result<GroupLayout> {
    if views == 0 {
        return input("group layout needs at least one view");
    }
    let mut groups: Vec<Group> = (0..views).map(Group::Diagonal).collect();
    for l in 0..views {
        for m in (l + 1)..views {
            groups.push(Group::Pair(l, m));
        }
    }
    Ok(GroupLayout { views, groups })
}

/// The block metric `A`, a `v × v` grid of `b × b` blocks (`b = n` in full
/// mode, `b = p` in Nyström mode).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricMatrix {
    entries: DMatrix<f64>,
    block: usize,
    layout: GroupLayout,
}

impl MetricMatrix {
    pub fn new(entries: DMatrix<f64>, block: usize, views: usize) -> Result<Self> {
        if block == 0 || !entries.is_square() || entries.nrows() != block * views {
            return input(format!(
                "metric of shape {:?} does not tile into {views}x{views} blocks of size {block}",
                entries.shape()
            ));
        }
        Ok(Self {
            entries,
            block,
            layout: group_layout(views)?,
        })
    }

    pub fn scaled_identity(block: usize, views: usize, scale: f64) -> Result<Self> {
        Self::new(
            DMatrix::identity(block * views, block * views) * scale,
            block,
            views,
        )
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn block_size(&self) -> usize {
        self.block
    }

    pub fn views(&self) -> usize {
        self.layout.views
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn layout(&self) -> &GroupLayout {
        &self.layout
    }

    /// Replaces the entries, keeping the block geometry.
    pub fn with_entries(&self, entries: DMatrix<f64>) -> Result<Self> {
        Self::new(entries, self.block, self.views())
    }

    pub fn block_view(&self, l: usize, m: usize) -> DMatrixView<'_, f64> {
        let b = self.block;
        self.entries.view((l * b, m * b), (b, b))
    }

    pub fn frobenius_sq(&self) -> f64 {
        frobenius_sq(&self.entries)
    }

    /// Frobenius norm over every block of the group.
    pub fn group_frobenius(&self, group: &Group) -> Result<f64> {
        if !self.layout.contains(group) {
            return input(format!(
                "group {group} is not part of a {}-view layout",
                self.views()
            ));
        }
        let sq: f64 = group
            .blocks()
            .into_iter()
            .map(|(l, m)| self.block_view(l, m).iter().map(|v| v * v).sum::<f64>())
            .sum();
        Ok(sq.sqrt())
    }

    /// `Σ_γ ‖A_γ‖_F`.
    pub fn group_norm_sum(&self) -> f64 {
        self.layout
            .groups
            .iter()
            .map(|g| self.group_frobenius(g).expect("layout group"))
            .sum()
    }
}

/// The multi-view Gram matrix `K = H A H`; block `(l, m)` is `K_l A_lm K_m`.
pub fn assemble_k(h: &GramStack, a: &MetricMatrix) -> Result<DMatrix<f64>> {
    let (n, v) = (h.n(), h.views());
    if a.views() != v || a.block_size() != n {
        return Err(MvmlError::Input(format!(
            "metric has {} views of size {}, Gram stack has {v} views of size {n}",
            a.views(),
            a.block_size()
        )));
    }
    let mut k = DMatrix::zeros(n * v, n * v);
    for l in 0..v {
        for m in 0..v {
            let blk = h.block(l) * a.block_view(l, m) * h.block(m);
            k.view_mut((l * n, m * n), (n, n)).copy_from(&blk);
        }
    }
    Ok(k)
}

/// Metric whose diagonal blocks are `K_l†`, so the diagonal of `H A H`
/// reproduces the single-view Grams and the off-diagonal blocks vanish.
pub fn preset_metric_identity_blocks(h: &GramStack, rtol: f64) -> MetricMatrix {
    let (n, v) = (h.n(), h.views());
    let mut a = DMatrix::zeros(n * v, n * v);
    for l in 0..v {
        let p = pinv_sym(h.block(l), rtol).pinv;
        a.view_mut((l * n, l * n), (n, n)).copy_from(&p);
    }
    MetricMatrix::new(a, n, v).expect("square tiling")
}

/// Cross-covariance-style metric: every block `A_lm = I_n / n`.
pub fn preset_metric_cov(h: &GramStack) -> MetricMatrix {
    let (n, v) = (h.n(), h.views());
    let scale = 1.0 / n as f64;
    let mut a = DMatrix::zeros(n * v, n * v);
    for l in 0..v {
        for m in 0..v {
            for i in 0..n {
                a[(l * n + i, m * n + i)] = scale;
            }
        }
    }
    MetricMatrix::new(a, n, v).expect("square tiling")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{sym_eigen, PINV_RTOL};
    use nalgebra::dmatrix;

    fn stack(blocks: Vec<DMatrix<f64>>) -> GramStack {
        GramStack::from_grams(
            blocks
                .into_iter()
                .map(|b| GramMatrix::from_matrix(b).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn layout_counts() {
        assert_eq!(group_layout(3).unwrap().groups().len(), 6);
        assert_eq!(group_layout(1).unwrap().groups().len(), 1);
        assert_eq!(group_layout(2).unwrap().groups().len(), 3);
        assert!(group_layout(0).is_err());
    }

    #[test]
    fn group_norms() {
        let a = MetricMatrix::new(DMatrix::zeros(4, 4), 2, 2).unwrap();
        assert_eq!(a.group_frobenius(&Group::Pair(0, 1)).unwrap(), 0.0);

        let a = MetricMatrix::scaled_identity(2, 2, 1.0).unwrap();
        assert!((a.group_frobenius(&Group::Diagonal(1)).unwrap() - 2f64.sqrt()).abs() < 1e-15);

        let mut e = DMatrix::zeros(4, 4);
        e.view_mut((0, 2), (2, 2)).fill(1.0);
        e.view_mut((2, 0), (2, 2)).fill(1.0);
        let a = MetricMatrix::new(e, 2, 2).unwrap();
        assert!((a.group_frobenius(&Group::Pair(0, 1)).unwrap() - 8f64.sqrt()).abs() < 1e-15);

        assert!(a.group_frobenius(&Group::Pair(0, 2)).is_err());
        assert!(a.group_frobenius(&Group::Pair(1, 0)).is_err());
    }

    #[test]
    fn stack_mismatch_rejected() {
        let views = vec![DMatrix::zeros(3, 2), DMatrix::zeros(4, 2)];
        let cfgs = vec![KernelConfig::linear(); 2];
        assert!(build_gram_stack(&views, &cfgs).is_err());
        assert!(build_gram_stack(&views[..1], &cfgs).is_err());
    }

    #[test]
    fn identity_metric_squares_grams() {
        let k1 = dmatrix![2.0, 1.0; 1.0, 2.0];
        let k2 = dmatrix![1.0, 0.5; 0.5, 3.0];
        let h = stack(vec![k1.clone(), k2.clone()]);
        let a = MetricMatrix::scaled_identity(2, 2, 1.0).unwrap();
        let k = assemble_k(&h, &a).unwrap();
        assert_eq!(k.view((0, 0), (2, 2)), &k1 * &k1);
        assert_eq!(k.view((2, 2), (2, 2)), &k2 * &k2);
        assert_eq!(k.view((0, 2), (2, 2)), DMatrix::<f64>::zeros(2, 2));
    }

    #[test]
    fn single_view_pinv_recovers_gram() {
        let k1 = dmatrix![2.0, 1.0, 0.0; 1.0, 2.0, 0.5; 0.0, 0.5, 1.0];
        let h = stack(vec![k1.clone()]);
        let a = preset_metric_identity_blocks(&h, PINV_RTOL);
        let k = assemble_k(&h, &a).unwrap();
        assert!((k - k1).amax() < 1e-12);
    }

    #[test]
    fn identity_blocks_preset_handles_duplicates() {
        // rows 0 and 2 identical → rank 2
        let x = dmatrix![1.0, 0.0; 0.3, 1.0; 1.0, 0.0];
        let h = build_gram_stack(&[x], &[KernelConfig::gaussian(0.8).unwrap()]).unwrap();
        let k1 = h.block(0).clone();
        let a = preset_metric_identity_blocks(&h, PINV_RTOL);
        let rec = assemble_k(&h, &a).unwrap();
        // eigen oracle: K K† K = Σ_{λ>0} λ v vᵀ = K
        let eig = sym_eigen(&k1);
        let mut oracle = DMatrix::zeros(3, 3);
        for (i, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam.abs() > 1e-10 * eig.eigenvalues.amax() {
                let v = eig.eigenvectors.column(i);
                oracle += lam * v * v.transpose();
            }
        }
        assert!((&rec - &oracle).amax() < 1e-10);
        assert!((&rec - &k1).amax() < 1e-10);
        assert_eq!(rec.view((0, 0), (3, 3)).nrows(), 3);
    }

    #[test]
    fn identity_preset_of_identity_gram() {
        let h = stack(vec![DMatrix::identity(3, 3)]);
        let a = preset_metric_identity_blocks(&h, PINV_RTOL);
        assert!((a.entries() - DMatrix::<f64>::identity(3, 3)).amax() < 1e-15);
    }

    #[test]
    fn cov_preset_single_view() {
        let h = stack(vec![DMatrix::identity(2, 2)]);
        let a = preset_metric_cov(&h);
        assert_eq!(a.entries(), &(DMatrix::<f64>::identity(2, 2) * 0.5));
    }

    #[test]
    fn cov_preset_off_diagonal_block() {
        let k1 = dmatrix![2.0, 1.0, 0.0; 1.0, 2.0, 0.5; 0.0, 0.5, 1.0];
        let k2 = dmatrix![1.0, 0.2, 0.1; 0.2, 1.0, 0.3; 0.1, 0.3, 1.0];
        let h = stack(vec![k1.clone(), k2.clone()]);
        let a = preset_metric_cov(&h);
        let k = assemble_k(&h, &a).unwrap();
        let expected = &k1 * &k2 / 3.0;
        assert!((k.view((0, 3), (3, 3)) - expected).amax() < 1e-14);
        let ev = sym_eigen(a.entries()).eigenvalues;
        assert!(ev.min() > -1e-14);
    }

    #[test]
    fn block_diag_ops() {
        let b = BlockDiag::new(vec![
            dmatrix![1.0, 2.0; 3.0, 4.0],
            dmatrix![0.0, 1.0; 1.0, 0.0],
        ])
        .unwrap();
        let x = DVector::from_vec(vec![1.0, 1.0, 2.0, 3.0]);
        assert_eq!(b.apply(&x).unwrap(), b.to_dense() * &x);
        let w = DVector::from_vec(vec![0.5, 2.0]);
        let m = b.combined(&w).unwrap();
        assert_eq!(m, dmatrix![0.5, 1.0, 0.0, 2.0; 1.5, 2.0, 2.0, 0.0]);
        assert!(BlockDiag::new(vec![DMatrix::zeros(2, 2), DMatrix::zeros(2, 3)]).is_err());
    }
}
