//! Block-spin transformations, exact pushforwards, the joint kernel `γ⊗T`
//! and fill-dependent renormalized conditional kernels.

use serde::{Deserialize, Serialize};

use crate::engines::column::{self, ColumnPlan, MAX_COLUMN_WIDTH};
use crate::engines::mc::{empirical_estimate, mc_sample_graph, McConfig};
use crate::engines::{Factor, FactorGraph, ENUMERATION_CAP};
use crate::error::{invalid, Error, Result};
use crate::lattice::{
    bit_of, project_config, spin_of, Dim, Interaction, LocalFunction, PeriodicPattern, Region, Site, Spin, Tail,
    TailedConfiguration, MINUS, PLUS,
};
use crate::par;
use crate::specification::{FiniteMeasure, KernelRecipe};

/// Free-variable count below which plain enumeration beats the column DP.
const SMALL_ENUMERATION: usize = 16;

/// Which sites a projection keeps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionRule {
    /// The line `y = 0` of a 2-D lattice, seen as a 1-D image lattice.
    Layer,
    /// The sublattice `bZ^d`.
    Sublattice { b: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TransformKind {
    Decimation { b: u32 },
    Projection { rule: ProjectionRule },
    Kadanoff { p: f64, b: u32 },
    Majority { b: u32 },
    NoisyProjection { p: f64, rule: ProjectionRule },
}

/// A product block-spin rule from a `d`-dimensional source lattice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transformation {
    kind: TransformKind,
    dim: Dim,
}

/// `T_{x'}(ω'|block)` given the block sum `s`.
pub fn single_site_kernel_prob(kind: &TransformKind, block_sum: i64, image_spin: Spin) -> f64 {
    let w = image_spin as i64;
    match *kind {
        TransformKind::Decimation { .. } | TransformKind::Projection { .. } => (block_sum == w) as u8 as f64,
        TransformKind::Majority { .. } => (block_sum.signum() == w) as u8 as f64,
        TransformKind::Kadanoff { p, .. } | TransformKind::NoisyProjection { p, .. } => {
            1.0 / (1.0 + (-2.0 * p * (w * block_sum) as f64).exp())
        }
    }
}

impl Transformation {
    pub fn new(kind: TransformKind, dim: Dim) -> Result<Self> {
        let check_b = |b: u32| if b == 0 { invalid("block spacing must be positive") } else { Ok(()) };
        let check_rule = |r: ProjectionRule| match r {
            ProjectionRule::Layer if dim != Dim::Two => invalid("layer projection needs a 2-D source"),
            ProjectionRule::Sublattice { b } => check_b(b),
            _ => Ok(()),
        };
        match kind {
            TransformKind::Decimation { b } => check_b(b)?,
            TransformKind::Projection { rule } => check_rule(rule)?,
            TransformKind::Kadanoff { p, b } => {
                check_b(b)?;
                if !p.is_finite() {
                    return invalid("Kadanoff parameter must be finite");
                }
            }
            TransformKind::Majority { b } => {
                check_b(b)?;
                if b % 2 == 0 {
                    return invalid("majority rule needs odd block sides");
                }
            }
            TransformKind::NoisyProjection { p, rule } => {
                check_rule(rule)?;
                if !p.is_finite() {
                    return invalid("noise parameter must be finite");
                }
            }
        }
        Ok(Self { kind, dim })
    }

    pub fn decimation(b: u32, dim: Dim) -> Result<Self> {
        Self::new(TransformKind::Decimation { b }, dim)
    }

    pub fn kadanoff(p: f64, b: u32, dim: Dim) -> Result<Self> {
        Self::new(TransformKind::Kadanoff { p, b }, dim)
    }

    pub fn majority(b: u32, dim: Dim) -> Result<Self> {
        Self::new(TransformKind::Majority { b }, dim)
    }

    pub fn noisy_decimation(p: f64, b: u32, dim: Dim) -> Result<Self> {
        Self::new(TransformKind::NoisyProjection { p, rule: ProjectionRule::Sublattice { b } }, dim)
    }

    pub fn layer_projection() -> Self {
        Self { kind: TransformKind::Projection { rule: ProjectionRule::Layer }, dim: Dim::Two }
    }

    pub fn kind(&self) -> &TransformKind {
        &self.kind
    }

    pub fn source_dim(&self) -> Dim {
        self.dim
    }

    pub fn image_dim(&self) -> Dim {
        match self.kind {
            TransformKind::Projection { rule: ProjectionRule::Layer }
            | TransformKind::NoisyProjection { rule: ProjectionRule::Layer, .. } => Dim::One,
            _ => self.dim,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(
            self.kind,
            TransformKind::Decimation { .. } | TransformKind::Projection { .. } | TransformKind::Majority { .. }
        )
    }

    /// Spacing between block anchors.
    pub fn spacing(&self) -> u32 {
        match self.kind {
            TransformKind::Decimation { b } | TransformKind::Kadanoff { b, .. } | TransformKind::Majority { b } => b,
            TransformKind::Projection { rule } | TransformKind::NoisyProjection { rule, .. } => match rule {
                ProjectionRule::Layer => 1,
                ProjectionRule::Sublattice { b } => b,
            },
        }
    }

    fn block_side(&self) -> u32 {
        match self.kind {
            TransformKind::Kadanoff { b, .. } | TransformKind::Majority { b } => b,
            _ => 1,
        }
    }

    /// Compression factor recorded for the rule.
    pub fn alpha(&self) -> f64 {
        let b = self.spacing() as f64;
        let side = self.block_side();
        b + ((side as f64 - 1.0) / 2.0).ceil()
    }

    fn low_offset(&self) -> i64 {
        (self.block_side() as i64 - 1) / 2
    }

    /// Source sites of the block `B_{x'}`.
    pub fn block(&self, image: Site) -> Region {
        let b = self.spacing() as i64;
        let side = self.block_side() as i64;
        let lo = self.low_offset();
        let anchor = match self.image_dim() {
            Dim::One if self.dim == Dim::Two => [image.coords[0], 0],
            _ => [b * image.coords[0], b * image.coords[1]],
        };
        let mut sites = Vec::new();
        let ys = if self.dim == Dim::Two { side } else { 1 };
        for dx in 0..side {
            for dy in 0..ys {
                let y_off = if self.dim == Dim::Two { dy - lo } else { 0 };
                sites.push(Site::d2(anchor[0] + dx - lo, anchor[1] + y_off));
            }
        }
        Region::explicit(self.dim, sites).expect("distinct block sites")
    }

    /// The image site whose block contains, or lies nearest to, `x`.
    pub fn image_of(&self, x: Site) -> Site {
        let b = self.spacing() as i64;
        let coord = |c: i64| {
            if self.block_side() > 1 {
                (c + self.low_offset()).div_euclid(b)
            } else {
                (c + b / 2).div_euclid(b)
            }
        };
        match self.image_dim() {
            Dim::One if self.dim == Dim::Two => Site::d1(x.coords[0]),
            Dim::One => Site::d1(coord(x.coords[0])),
            Dim::Two => Site::d2(coord(x.coords[0]), coord(x.coords[1])),
        }
    }

    /// `T_{x'}(ω'|block spins)`.
    pub fn factor_prob(&self, image_spin: Spin, block: &[Spin]) -> f64 {
        let s: i64 = block.iter().map(|&v| v as i64).sum();
        single_site_kernel_prob(&self.kind, s, image_spin)
    }

    /// Image sites whose blocks lie inside `source`.
    pub fn image_region(&self, source: &Region) -> Region {
        let mut cand: Vec<Site> = source.sites().iter().map(|&x| self.image_of(x)).collect();
        cand.sort();
        cand.dedup();
        let kept = cand.into_iter().filter(|&x| self.block(x).is_subset(source));
        Region::explicit(self.image_dim(), kept).expect("distinct image sites")
    }

    /// Source tail carrying each image spin onto its nearest block.
    pub fn lift_tail(&self, tail: &Tail) -> Result<Tail> {
        match tail {
            Tail::AllPlus | Tail::AllMinus => Ok(tail.clone()),
            Tail::Periodic(p) => {
                let per = p.period();
                let b = self.spacing() as u64;
                let period = match (self.dim, self.image_dim()) {
                    (Dim::Two, Dim::One) => [per[0], 1],
                    (Dim::One, _) => [b * per[0], 1],
                    _ => [b * per[0], b * per[1]],
                };
                let mut values = Vec::with_capacity((period[0] * period[1]) as usize);
                for i in 0..period[0] as i64 {
                    for j in 0..period[1] as i64 {
                        values.push(p.spin_at(self.image_of(Site::d2(i, j)).coords));
                    }
                }
                Ok(Tail::Periodic(PeriodicPattern::from_dense(period, &values)?))
            }
            Tail::Named { .. } => invalid("only constant and periodic tails can be lifted"),
        }
    }

    /// A source configuration with every block carrying its image spin.
    pub fn lift(&self, theta: &TailedConfiguration) -> Result<TailedConfiguration> {
        let tail = self.lift_tail(theta.tail())?;
        let mut sites = Vec::new();
        for &x in theta.window().sites() {
            sites.extend(self.block(x).sites().iter().copied());
        }
        sites.sort();
        sites.dedup();
        let window = Region::explicit(self.dim, sites)?;
        let values = window.sites().iter().map(|&s| theta.spin_at(self.image_of(s))).collect();
        TailedConfiguration::new(window, values, tail)
    }
}

/// Image law `μT` on every image site whose block lies in `μ`'s support.
pub fn pushforward(mu: &FiniteMeasure, t: &Transformation) -> Result<FiniteMeasure> {
    let image = t.image_region(mu.support());
    pushforward_to(mu, t, &image)
}

/// Image law on `image`; every block must lie inside `μ`'s support.
pub fn pushforward_to(mu: &FiniteMeasure, t: &Transformation, image: &Region) -> Result<FiniteMeasure> {
    let src = mu.support();
    let mut blocks = Vec::with_capacity(image.len());
    for &x in image.sites() {
        let b = t.block(x);
        if !b.is_subset(src) {
            return Err(Error::RegionMismatch(format!("block of image site {x} escapes the source window")));
        }
        blocks.push(src.positions_of(&b)?);
    }
    let n_img = image.config_count()? as usize;
    if src.len() + image.len() > 30 {
        return Err(Error::SizeCap { what: "pushforward states".into(), needed: (src.len() + image.len()) as u64, cap: 30 });
    }
    let block_sum = |c: u64, pos: &[usize]| pos.iter().map(|&p| spin_of(c, p) as i64).sum::<i64>();
    let mut out = vec![0.0; n_img];
    if t.is_deterministic() {
        for (c, &p) in mu.probs().iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let mut code = 0u64;
            for (k, pos) in blocks.iter().enumerate() {
                let s = block_sum(c as u64, pos);
                let plus = single_site_kernel_prob(t.kind(), s, PLUS) > 0.5;
                code |= (plus as u64) << k;
            }
            out[code as usize] += p;
        }
    } else {
        for (c, &p) in mu.probs().iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let q: Vec<f64> =
                blocks.iter().map(|pos| single_site_kernel_prob(t.kind(), block_sum(c as u64, pos), PLUS)).collect();
            for (code, slot) in out.iter_mut().enumerate() {
                let mut w = p;
                for (k, &qk) in q.iter().enumerate() {
                    w *= if code >> k & 1 == 1 { qk } else { 1.0 - qk };
                }
                *slot += w;
            }
        }
    }
    FiniteMeasure::new(image.clone(), out)
}

#[derive(Clone, Debug, Serialize)]
pub struct BlockSpinReport {
    pub strict_locality: bool,
    /// `max_n r(n)/n` where `r(n)` is the radius of the preimage of `Λ'_n`.
    pub alpha_estimate: f64,
    pub alpha: f64,
    /// Largest distance from a probed source site to its nearest block.
    pub block_gap: f64,
    pub factorization: bool,
    pub factorization_residual: f64,
    pub witness: Option<String>,
}

/// Strict locality: the preimage of `Λ'_n` lies in `Λ_{⌊αn⌋}` for each
/// probe `n`, and every source site within the probed horizon is within
/// distance `α` of a block. Factorization: single-site events at image
/// distance greater than `α` are independent under `T(·|ω)` for every
/// configuration `ω` of the two blocks.
pub fn block_spin_check(t: &Transformation, probe_ns: &[u32]) -> Result<BlockSpinReport> {
    let alpha = t.alpha();
    let mut ok = true;
    let mut est: f64 = 0.0;
    let mut witness = None;
    let mut horizon = 0i64;
    for &n in probe_ns.iter().filter(|&&n| n > 0) {
        let img = Region::cube(n, t.image_dim());
        let r = img.sites().iter().map(|&x| t.block(x).radius()).max().unwrap_or(0);
        est = est.max(r as f64 / n as f64);
        horizon = horizon.max(r);
        if r > (alpha * n as f64).floor() as i64 {
            ok = false;
            witness.get_or_insert_with(|| format!("preimage of image cube {n} has radius {r}"));
        }
    }
    let mut gap: f64 = 0.0;
    for &x in Region::cube(horizon as u32, t.source_dim()).sites() {
        let b = t.block(t.image_of(x));
        let d = b
            .sites()
            .iter()
            .map(|s| (s.coords[0] - x.coords[0]).abs().max((s.coords[1] - x.coords[1]).abs()))
            .min()
            .unwrap_or(i64::MAX);
        gap = gap.max(d as f64);
    }
    if gap > alpha {
        ok = false;
        witness.get_or_insert_with(|| format!("source sites at distance {gap} from every block"));
    }
    let a = Site::ORIGIN;
    let far = alpha.floor() as i64 + 1;
    let b_site = match t.image_dim() {
        Dim::One => Site::d1(far),
        Dim::Two => Site::d2(far, 0),
    };
    let ba = t.block(a);
    let bb = t.block(b_site);
    let union = ba.union(&bb);
    let pa = union.positions_of(&ba)?;
    let pb = union.positions_of(&bb)?;
    let mut residual: f64 = 0.0;
    for c in 0..union.config_count()? {
        let spins = |pos: &[usize]| pos.iter().map(|&p| spin_of(c, p)).collect::<Vec<_>>();
        let ta = t.factor_prob(PLUS, &spins(&pa));
        let tb = t.factor_prob(PLUS, &spins(&pb));
        // product form: the joint law of the two image spins is the product of the factors
        let joint = [[(1.0 - ta) * (1.0 - tb), (1.0 - ta) * tb], [ta * (1.0 - tb), ta * tb]];
        let marg_a = ta;
        let marg_b = tb;
        residual = residual.max((joint[1][1] - marg_a * marg_b).abs());
    }
    Ok(BlockSpinReport {
        strict_locality: ok,
        alpha_estimate: est,
        alpha,
        block_gap: gap,
        factorization: residual < 1e-12,
        factorization_residual: residual,
        witness,
    })
}

/// The family `γ⊗T` on joint volumes: layer 0 holds `Λ`, layer 1 holds `Λ'`.
#[derive(Clone)]
pub struct JointSpec<G> {
    pub gamma: G,
    pub t: Transformation,
}

impl<G: KernelRecipe> JointSpec<G> {
    pub fn new(gamma: G, t: Transformation) -> Result<Self> {
        if t.image_dim() != t.source_dim() {
            return invalid("joint kernels need equal source and image dimension");
        }
        Ok(Self { gamma, t })
    }

    fn split(&self, region: &Region) -> Result<(Region, Region)> {
        let dim = region.dim();
        let src = Region::explicit(dim, region.sites().iter().copied().filter(|s| s.layer == 0))?;
        let img = Region::explicit(dim, region.sites().iter().filter(|s| s.layer == 1).map(|s| s.on_layer(0)))?;
        if src.len() + img.len() != region.len() {
            return invalid("joint volumes use layers 0 and 1 only");
        }
        Ok((src, img))
    }

    /// Image sites whose factors appear: `x' ∈ Λ'` or `B_{x'} ∩ Λ ≠ ∅`.
    fn active_images(&self, src: &Region, img: &Region) -> Region {
        let mut v: Vec<Site> = img.sites().to_vec();
        for &x in src.sites() {
            // blocks near x: check image sites around image_of(x)
            let c = self.t.image_of(x);
            let r = self.t.block_side() as i64;
            let dim = self.t.image_dim();
            for dx in -r..=r {
                for dy in if dim == Dim::Two { -r..=r } else { 0..=0 } {
                    let y = Site { layer: 0, coords: [c.coords[0] + dx, c.coords[1] + dy] };
                    if self.t.block(y).contains(x) {
                        v.push(y);
                    }
                }
            }
        }
        Region::explicit(self.t.image_dim(), {
            v.sort();
            v.dedup();
            v
        })
        .expect("deduplicated")
    }
}

impl<G: KernelRecipe> KernelRecipe for JointSpec<G> {
    fn dim(&self) -> Dim {
        self.t.source_dim()
    }

    fn kernel(&self, region: &Region, omega: &TailedConfiguration) -> Result<FiniteMeasure> {
        let (src, img) = self.split(region)?;
        let row = self.gamma.kernel(&src, omega)?;
        let active = self.active_images(&src, &img);
        let n = region.len();
        if n > ENUMERATION_CAP {
            return Err(Error::SizeCap { what: "joint volume".into(), needed: n as u64, cap: ENUMERATION_CAP as u64 });
        }
        let pos_src = region.positions_of(&Region::explicit(region.dim(), src.sites().iter().copied())?)?;
        let blocks: Vec<(Site, Region)> = active.sites().iter().map(|&x| (x, self.t.block(x))).collect();
        let mut w = vec![0.0; 1usize << n];
        for (c, slot) in w.iter_mut().enumerate() {
            let c = c as u64;
            let sc = project_config(c, &pos_src);
            let p = row.prob(sc);
            if p == 0.0 {
                continue;
            }
            let spin = |s: Site| -> Spin {
                match region.index_of(s) {
                    Some(i) => spin_of(c, i),
                    None => omega.spin_at(s),
                }
            };
            let mut v = p;
            for (x, b) in &blocks {
                let bs: Vec<Spin> = b.sites().iter().map(|&s| spin(s)).collect();
                v *= self.t.factor_prob(spin(x.on_layer(1)), &bs);
            }
            *slot = v;
        }
        let z: f64 = w.iter().sum();
        if z == 0.0 {
            return Err(Error::Engine("joint kernel row has zero mass".into()));
        }
        FiniteMeasure::new(region.clone(), w.iter().map(|v| v / z).collect())
    }

    fn dependence_set(&self, region: &Region) -> Option<Region> {
        let (src, img) = self.split(region).ok()?;
        let mut v: Vec<Site> = self.gamma.dependence_set(&src)?.sites().to_vec();
        for &x in self.active_images(&src, &img).sites() {
            if !img.contains(x) {
                v.push(x.on_layer(1));
            }
            v.extend(self.t.block(x).sites().iter().copied().filter(|s| !src.contains(*s)));
        }
        v.sort();
        v.dedup();
        Region::explicit(region.dim(), v).ok()
    }
}

/// `(γ⊗T)_{Λ×Λ'}(·|boundary)` on the joint region `Λ ∪ Λ'` (layer 1).
pub fn joint_kernel<G: KernelRecipe + Clone>(
    gamma: &G,
    t: &Transformation,
    lambda: &Region,
    lambda_image: &Region,
    boundary: &TailedConfiguration,
) -> Result<FiniteMeasure> {
    let spec = JointSpec::new(gamma.clone(), *t)?;
    let region = Region::explicit(
        lambda.dim(),
        lambda.sites().iter().copied().chain(lambda_image.sites().iter().map(|s| s.on_layer(1))),
    )?;
    spec.kernel(&region, boundary)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Geometry {
    Lattice,
    /// Infinite in `x`, periodic in `y` with the given width (`d = 2`).
    Cylinder { width: u32 },
}

/// The source Ising system underlying a renormalized kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceModel {
    pub phi: Interaction,
    pub dim: Dim,
    pub geometry: Geometry,
}

/// Renormalized conditional kernel `π_{Λ'}(·|ω')` on the image lattice.
///
/// Image spins of `ω'` are read on the image window `V'_R`; source spins
/// outside the source window (the blocks of `V'_R` plus `pad`) are frozen to
/// the lift of `ω'`'s tail.
#[derive(Clone, Debug, Serialize)]
pub struct RenormalizedKernel {
    pub source: SourceModel,
    pub t: Transformation,
    pub radius: u32,
    pub pad: u32,
}

/// A renormalized conditional expectation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConditionalEstimate {
    pub value: f64,
    pub standard_error: f64,
    pub exact: bool,
}

struct JointGraph {
    graph: FactorGraph,
    region: Region,
    x_keys: Vec<i64>,
    image_vars: Vec<usize>,
}

impl RenormalizedKernel {
    pub fn new(source: SourceModel, t: Transformation, radius: u32, pad: u32) -> Result<Self> {
        if source.dim != t.source_dim() {
            return invalid("transformation and source model disagree on dimension");
        }
        if let Geometry::Cylinder { width } = source.geometry {
            if source.dim != Dim::Two || t.image_dim() != Dim::Two {
                return invalid("cylinders need a 2-D source and image");
            }
            if width == 0 || width % t.spacing() != 0 {
                return invalid("cylinder width must be a multiple of the block spacing");
            }
        }
        Ok(Self { source, t, radius, pad })
    }

    fn wrap(&self, s: Site) -> Site {
        match self.source.geometry {
            Geometry::Lattice => s,
            Geometry::Cylinder { width } => Site { layer: s.layer, coords: [s.coords[0], s.coords[1].rem_euclid(width as i64)] },
        }
    }

    fn image_width(&self) -> Option<i64> {
        match self.source.geometry {
            Geometry::Lattice => None,
            Geometry::Cylinder { width } => Some((width / self.t.spacing()) as i64),
        }
    }

    /// Image sites read from `ω'`.
    pub fn image_window(&self, r: u32) -> Region {
        match self.image_width() {
            None => Region::cube(r, self.t.image_dim()),
            Some(w) => {
                let r = r as i64;
                let sites = (-r..=r).flat_map(|x| (0..w).map(move |y| Site::d2(x, y)));
                Region::explicit(Dim::Two, sites).expect("distinct")
            }
        }
    }

    /// Source sites carried as variables.
    pub fn source_window(&self) -> Region {
        let v = self.image_window(self.radius);
        let r = v.sites().iter().map(|&x| self.t.block(x).radius()).max().unwrap_or(0) + self.pad as i64;
        match self.source.geometry {
            Geometry::Lattice => Region::cube(r as u32, self.source.dim),
            Geometry::Cylinder { width } => {
                let sites = (-r..=r).flat_map(|x| (0..width as i64).map(move |y| Site::d2(x, y)));
                Region::explicit(Dim::Two, sites).expect("distinct")
            }
        }
    }

    fn block(&self, x: Site) -> Vec<Site> {
        let mut v: Vec<Site> = self.t.block(x).sites().iter().map(|&s| self.wrap(s)).collect();
        v.sort();
        v.dedup();
        v
    }

    fn joint_graph(&self, lambda: &Region, omega: &TailedConfiguration) -> Result<JointGraph> {
        let v = self.image_window(self.radius);
        if !lambda.is_subset(&v) {
            return invalid("image volume must lie in the image window");
        }
        let w = self.source_window();
        let exterior = self.t.lift_tail(omega.tail())?;
        let dim = self.source.dim;
        let region = Region::explicit(
            dim,
            w.sites().iter().copied().chain(lambda.sites().iter().map(|s| Site { layer: 1, coords: s.coords })),
        )?;
        let nw = w.len();
        let mut g = FactorGraph::new(region.len());
        let k = self.source.phi.k();
        let hb = self.source.phi.hb();
        for (i, s) in w.sites().iter().enumerate() {
            let mut field = hb;
            for y in s.neighbors(dim) {
                let y = self.wrap(y);
                match w.index_of(y) {
                    Some(j) if j > i => g.add_coupling(i, j, k),
                    Some(_) => {}
                    None => field += k * exterior.spin_at(y) as f64,
                }
            }
            g.add_unary(i, -field, field);
        }
        let kind = *self.t.kind();
        let block_factor = |g: &mut FactorGraph, vars: &[usize], image: Option<Spin>, image_var: Option<usize>| -> Result<()> {
            let nb = vars.len();
            let mut all = vars.to_vec();
            if let Some(iv) = image_var {
                all.push(iv);
            }
            let table: Vec<f64> = (0..1u64 << all.len())
                .map(|c| {
                    let s: i64 = (0..nb).map(|j| spin_of(c, j) as i64).sum();
                    let img = image.unwrap_or_else(|| spin_of(c, nb));
                    single_site_kernel_prob(&kind, s, img).ln()
                })
                .collect();
            g.add_factor(Factor::new(&all, table)?);
            Ok(())
        };
        for &x in v.sites() {
            let vars = self
                .block(x)
                .iter()
                .map(|&s| w.index_of(s).ok_or_else(|| Error::Engine(format!("block of {x} leaves the source window"))))
                .collect::<Result<Vec<_>>>()?;
            match lambda.index_of(x) {
                Some(li) => block_factor(&mut g, &vars, None, Some(nw + li))?,
                None => {
                    let spin = omega.spin_at(x);
                    if vars.len() == 1 && self.t.is_deterministic() {
                        g.fix(vars[0], spin);
                    } else {
                        block_factor(&mut g, &vars, Some(spin), None)?;
                    }
                }
            }
        }
        let mut x_keys: Vec<i64> = w.sites().iter().map(|s| s.coords[0]).collect();
        for &x in lambda.sites() {
            x_keys.push(self.t.block(x).sites()[0].coords[0]);
        }
        let image_vars = (nw..nw + lambda.len()).collect();
        Ok(JointGraph { graph: g, region, x_keys, image_vars })
    }

    fn exact_marginal(&self, jg: &JointGraph) -> Result<Vec<f64>> {
        let free = jg.graph.free_vars().len();
        if free > SMALL_ENUMERATION {
            for group in 1..=4 {
                if let Ok(plan) = ColumnPlan::by_x(&jg.graph, &jg.x_keys, group, false) {
                    return column::marginal(&jg.graph, &plan, &jg.image_vars);
                }
            }
        }
        if free <= ENUMERATION_CAP {
            return jg.graph.marginal(&jg.image_vars);
        }
        Err(Error::Budget(format!(
            "{free} free variables exceed enumeration and no column plan fits width {MAX_COLUMN_WIDTH}"
        )))
    }

    /// `π_{Λ'}(f'|ω')` with an optional Monte Carlo fallback; `target_se`
    /// bounds the acceptable standard error of the fallback.
    pub fn conditional(
        &self,
        lambda: &Region,
        omega: &TailedConfiguration,
        f: &LocalFunction,
        mc: Option<(McConfig, f64)>,
    ) -> Result<ConditionalEstimate> {
        if !f.support().is_subset(lambda) {
            return invalid("f' must be supported in Λ'");
        }
        let jg = self.joint_graph(lambda, omega)?;
        match self.exact_marginal(&jg) {
            Ok(p) => {
                let m = FiniteMeasure::new(lambda.clone(), p)?;
                Ok(ConditionalEstimate { value: m.expectation(f)?, standard_error: 0.0, exact: true })
            }
            Err(Error::Budget(msg)) | Err(Error::SizeCap { what: msg, .. }) => {
                let Some((cfg, target)) = mc else {
                    return Err(Error::Budget(msg));
                };
                let stream = mc_sample_graph(&jg.graph, &jg.region, &cfg)?;
                let sites = f.support().sites().iter().map(|s| Site { layer: 1, coords: s.coords });
                let lifted = LocalFunction::new(Region::explicit(jg.region.dim(), sites)?, f.table().to_vec())?;
                let e = empirical_estimate(&stream, &lifted)?;
                if e.standard_error > target {
                    return Err(Error::Budget(format!(
                        "standard error {:.3e} above target {target:.3e}",
                        e.standard_error
                    )));
                }
                Ok(ConditionalEstimate { value: e.mean, standard_error: e.standard_error, exact: false })
            }
            Err(e) => Err(e),
        }
    }
}

impl KernelRecipe for RenormalizedKernel {
    fn dim(&self) -> Dim {
        self.t.image_dim()
    }

    fn kernel(&self, lambda: &Region, omega: &TailedConfiguration) -> Result<FiniteMeasure> {
        let jg = self.joint_graph(lambda, omega)?;
        FiniteMeasure::new(lambda.clone(), self.exact_marginal(&jg)?)
    }

    fn dependence_set(&self, _lambda: &Region) -> Option<Region> {
        None
    }

    fn window(&self, m: u32) -> Region {
        self.image_window(m)
    }
}

/// `π_{Λ'}(f'|ω'_{annulus} fill)` with the image window equal to the annulus' outer cube.
#[allow(clippy::too_many_arguments)]
pub fn renormalized_conditional(
    source: SourceModel,
    t: &Transformation,
    lambda: &Region,
    annulus: &TailedConfiguration,
    m: u32,
    fill: Tail,
    f: &LocalFunction,
    pad: u32,
    mc: Option<(McConfig, f64)>,
) -> Result<ConditionalEstimate> {
    let kernel = RenormalizedKernel::new(source, *t, m, pad)?;
    let omega = TailedConfiguration::new(annulus.window().clone(), annulus.values().to_vec(), fill)?;
    kernel.conditional(lambda, &omega, f, mc)
}

/// `|π^{M,+}(f') − π^{M,−}(f')|` at `ω'` for each `M` in `ms`, computed in parallel.
pub fn fill_gap_scan(
    source: SourceModel,
    t: &Transformation,
    lambda: &Region,
    omega: &TailedConfiguration,
    f: &LocalFunction,
    ms: &[u32],
    pad: u32,
) -> Result<Vec<(u32, f64, f64)>> {
    let jobs: Vec<(u32, Spin)> = ms.iter().flat_map(|&m| [(m, PLUS), (m, MINUS)]).collect();
    let vals = par::map_slice(&jobs, |&(m, sign)| {
        let kernel = RenormalizedKernel::new(source, *t, m, pad)?;
        let base = omega.materialize(&kernel.image_window(m));
        let w = TailedConfiguration::new(base.window().clone(), base.values().to_vec(), Tail::constant(sign))?;
        kernel.conditional(lambda, &w, f, None).map(|e| e.value)
    });
    let vals = vals.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ms.iter().enumerate().map(|(i, &m)| (m, vals[2 * i], vals[2 * i + 1])).collect())
}

/// Bits of an image configuration on `region` read from a tailed configuration.
pub fn image_code(region: &Region, omega: &TailedConfiguration) -> u64 {
    region.sites().iter().enumerate().fold(0, |a, (i, &s)| a | bit_of(omega.spin_at(s)) << i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engines::MarkovChain;

    #[test]
    fn kadanoff_probabilities() {
        let k = TransformKind::Kadanoff { p: 1.0, b: 3 };
        let e3 = 3f64.exp();
        assert!((single_site_kernel_prob(&k, 3, PLUS) - e3 / (e3 + 1.0 / e3)).abs() < 1e-15);
        let k0 = TransformKind::Kadanoff { p: 0.0, b: 3 };
        assert_eq!(single_site_kernel_prob(&k0, -1, PLUS), 0.5);
    }

    #[test]
    fn blocks_and_images() {
        let t = Transformation::majority(3, Dim::Two).unwrap();
        let b = t.block(Site::d2(1, 0));
        assert_eq!(b.len(), 9);
        assert!(b.contains(Site::d2(2, -1)) && b.contains(Site::d2(4, 1)));
        for &s in b.sites() {
            assert_eq!(t.image_of(s), Site::d2(1, 0));
        }
        let d = Transformation::decimation(2, Dim::One).unwrap();
        assert_eq!(d.block(Site::d1(-3)).sites(), &[Site::d1(-6)]);
        assert_eq!(d.image_of(Site::d1(3)), Site::d1(2));
    }

    #[test]
    fn decimated_chain_conditional_matches_markov_oracle() {
        let phi = Interaction::ising(1.0);
        let src = SourceModel { phi, dim: Dim::One, geometry: Geometry::Lattice };
        let t = Transformation::decimation(2, Dim::One).unwrap();
        let k = RenormalizedKernel::new(src, t, 2, 3).unwrap();
        let lam = Region::explicit(Dim::One, [Site::d1(0)]).unwrap();
        let omega = TailedConfiguration::new(
            Region::cube(2, Dim::One),
            vec![PLUS, MINUS, PLUS, PLUS, MINUS],
            Tail::AllPlus,
        )
        .unwrap();
        let got = k.kernel(&lam, &omega).unwrap();
        let p2 = MarkovChain::gibbs(&phi).step(2);
        let w = |s: usize| p2[0][s] * p2[s][1];
        let want = w(1) / (w(0) + w(1));
        assert!((got.prob(1) - want).abs() < 1e-12, "{} {}", got.prob(1), want);
    }
}
