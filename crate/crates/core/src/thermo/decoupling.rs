use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::lattice::{Dim, Region, Site};

use super::recipe::MeasureRecipe;

/// Event family for the decoupling constant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CylinderFamily {
    /// `A = {σ_x = a}` for `x ∈ Λ_n`, `B = {σ_y = b}` for `y` on the axes at distance `n+g+1`.
    SingleSite,
    /// `A` any configuration of `Λ_n`, `B` any configuration of the axis
    /// sites at distances `n+g+1 ..= n+g+width`.
    Cylinders { width: u32 },
}

#[derive(Clone, Debug, Serialize)]
pub struct DecouplingProfile {
    pub n: u32,
    pub g: u32,
    /// A lower bound on the true `c(n)`: the family is finite.
    pub c: f64,
    pub family: CylinderFamily,
    pub pairs: u64,
    /// Pairs with a zero-probability event.
    pub skipped: u64,
}

fn axis_sites(dim: Dim, r: i64) -> Vec<Site> {
    match dim {
        Dim::One => vec![Site::d1(-r), Site::d1(r)],
        Dim::Two => vec![Site::d2(-r, 0), Site::d2(r, 0), Site::d2(0, -r), Site::d2(0, r)],
    }
}

/// `max |log ν(A∩B) / (ν(A) ν(B))|` over the family.
pub fn decoupling_constant(nu: &MeasureRecipe, n: u32, g: u32, family: CylinderFamily) -> Result<DecouplingProfile> {
    let dim = nu.dim();
    let far = (n + g + 1) as i64;
    let blocks: Vec<(Region, Region)> = match family {
        CylinderFamily::SingleSite => {
            let bs = axis_sites(dim, far);
            let mut v = Vec::new();
            for &x in Region::cube(n, dim).sites() {
                for &y in &bs {
                    v.push((Region::explicit(dim, [x])?, Region::explicit(dim, [y])?));
                }
            }
            v
        }
        CylinderFamily::Cylinders { width } => {
            if width == 0 {
                return invalid("cylinder width must be positive");
            }
            let a = Region::cube(n, dim);
            let b = Region::explicit(dim, (0..width as i64).flat_map(|k| axis_sites(dim, far + k)))?;
            if a.len() + b.len() > 22 {
                return invalid("cylinder family too large to enumerate");
            }
            vec![(a, b)]
        }
    };
    let mut c: f64 = 0.0;
    let mut pairs = 0;
    let mut skipped = 0;
    for (sa, sb) in &blocks {
        let (ma, mb, joint) = nu.block_pair(sa, sb)?;
        let nb = mb.len();
        for (a, &pa) in ma.iter().enumerate() {
            for (b, &pb) in mb.iter().enumerate() {
                pairs += 1;
                let pab = joint[a * nb + b];
                if pa == 0.0 || pb == 0.0 || pab == 0.0 {
                    skipped += 1;
                    continue;
                }
                c = c.max((pab / (pa * pb)).ln().abs());
            }
        }
    }
    Ok(DecouplingProfile { n, g, c, family, pairs, skipped })
}
