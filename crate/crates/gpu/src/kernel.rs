//! Kernel descriptions and the backbones built from them.

use serde::{Deserialize, Serialize};

use crate::backbone::{Access, Backbone, BackboneError, IndexTerm, Op, Operand};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Axpy,
    OuterProduct,
    Matmul,
    /// Matrix multiplication whose `A` elements are `a_stride` apart.
    StridedMatmul,
    /// A load and a product in two loop nests, linked by a mapped operand.
    PointToPoint,
}

/// One level of tiling factors: an explicit list, or every power of two in
/// an inclusive range.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Factors {
    Range { range: [u32; 2] },
    List(Vec<u32>),
}

impl Factors {
    pub fn values(&self) -> Vec<u32> {
        match self {
            Factors::List(v) => v.clone(),
            Factors::Range { range: [lo, hi] } => {
                (0..32).map(|e| 1u32 << e).filter(|&p| p >= *lo && p <= *hi).collect()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Nests {
    /// All instructions iterate the same dimensions.
    #[default]
    Shared,
    /// Each instruction has its own loop nest.
    Separate,
}

/// A decision applied to the root before exploration. `args` name backbone
/// objects; `"*"` matches any object.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedDecision {
    pub choice: String,
    #[serde(default)]
    pub args: Vec<String>,
    pub values: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub kernel: KernelKind,
    #[serde(default)]
    pub m: u64,
    #[serde(default)]
    pub n: u64,
    #[serde(default)]
    pub k: u64,
    /// Tiling levels applied to the strip-mined dimensions.
    #[serde(default)]
    pub factors: Vec<Factors>,
    #[serde(default)]
    pub a_stride: Option<u64>,
    #[serde(default)]
    pub nests: Option<Nests>,
    #[serde(default)]
    pub fixed: Vec<FixedDecision>,
}

impl KernelSpec {
    pub fn new(kernel: KernelKind) -> Self {
        KernelSpec { kernel, m: 0, n: 0, k: 0, factors: vec![], a_stride: None, nests: None, fixed: vec![] }
    }

    pub fn axpy(n: u64, factors: Vec<Factors>) -> Self {
        KernelSpec { n, factors, ..Self::new(KernelKind::Axpy) }
    }

    pub fn matmul(m: u64, n: u64, k: u64, factors: Vec<Factors>) -> Self {
        KernelSpec { m, n, k, factors, ..Self::new(KernelKind::Matmul) }
    }
}

fn positive(name: &str, v: u64) -> Result<u64, BackboneError> {
    if v == 0 {
        Err(BackboneError::NonPositive(name.to_string()))
    } else {
        Ok(v)
    }
}

pub fn build_kernel(spec: &KernelSpec) -> Result<Backbone, BackboneError> {
    let factors: Vec<Vec<u32>> = spec.factors.iter().map(Factors::values).collect();
    match spec.kernel {
        KernelKind::Axpy => axpy(positive("n", spec.n)?, &factors, spec.nests.unwrap_or(Nests::Separate)),
        KernelKind::OuterProduct => {
            no_separate(spec)?;
            outer_product(positive("m", spec.m)?, positive("n", spec.n)?, &factors)
        }
        KernelKind::Matmul | KernelKind::StridedMatmul => {
            no_separate(spec)?;
            let default_stride = if spec.kernel == KernelKind::StridedMatmul { 32 } else { 1 };
            let stride = positive("a_stride", spec.a_stride.unwrap_or(default_stride))?;
            matmul(positive("m", spec.m)?, positive("n", spec.n)?, positive("k", spec.k)?, &factors, stride)
        }
        KernelKind::PointToPoint => point_to_point(positive("m", spec.m)?, positive("n", spec.n)?),
    }
}

fn no_separate(spec: &KernelSpec) -> Result<(), BackboneError> {
    if spec.nests == Some(Nests::Separate) {
        return Err(BackboneError::Unsupported(format!("{:?} only supports shared loop nests", spec.kernel)));
    }
    Ok(())
}

fn logical_index(l: usize) -> Vec<IndexTerm> {
    vec![IndexTerm::Logical { logical: l, stride: 1 }]
}

/// `z = alpha * x + y` over `n` elements.
pub fn axpy(n: u64, factors: &[Vec<u32>], nests: Nests) -> Result<Backbone, BackboneError> {
    let mut b = Backbone::new("axpy");
    let x = b.add_region("x", 4, n);
    let y = b.add_region("y", 4, n);
    let z = b.add_region("z", 4, n);
    let copies = if nests == Nests::Separate { 4 } else { 1 };
    let mut ls = Vec::new();
    for c in 0..copies {
        let name = if copies == 1 { "n".to_string() } else { format!("n_{}", ["x", "y", "mad", "st"][c]) };
        let l = b.add_logical(&name, n, 0)?;
        b.strip_mine(l, factors)?;
        ls.push(l);
    }
    let l = |c: usize| ls[c.min(copies - 1)];
    let ld_x = b.add_inst("ld_x", Op::Load, vec![], vec![l(0)], Some(Access { region: x, index: logical_index(l(0)) }));
    let ld_y = b.add_inst("ld_y", Op::Load, vec![], vec![l(1)], Some(Access { region: y, index: logical_index(l(1)) }));
    let mad = b.add_inst(
        "mad",
        Op::Mad,
        vec![Operand::Input("alpha".into()), Operand::Produced(ld_x), Operand::Produced(ld_y)],
        vec![l(2)],
        None,
    );
    let st = b.add_inst(
        "st_z",
        Op::Store,
        vec![Operand::Produced(mad)],
        vec![l(3)],
        Some(Access { region: z, index: logical_index(l(3)) }),
    );
    if nests == Nests::Separate {
        b.add_mapping(ld_x, mad, 1, &[(l(0), l(2))]);
        b.add_mapping(ld_y, mad, 2, &[(l(1), l(2))]);
        b.add_mapping(mad, st, 0, &[(l(2), l(3))]);
    }
    Ok(b)
}

/// `c[i*n + j] = a[i] * b[j]`.
pub fn outer_product(m: u64, n: u64, factors: &[Vec<u32>]) -> Result<Backbone, BackboneError> {
    let mut b = Backbone::new("outer_product");
    let ra = b.add_region("A", 4, m);
    let rb = b.add_region("B", 4, n);
    let rc = b.add_region("C", 4, m * n);
    let lm = b.add_logical("m", m, 0)?;
    let ln = b.add_logical("n", n, 1)?;
    b.strip_mine(lm, factors)?;
    b.strip_mine(ln, factors)?;
    let a = b.add_inst("ld_a", Op::Load, vec![], vec![lm], Some(Access { region: ra, index: logical_index(lm) }));
    let bb = b.add_inst("ld_b", Op::Load, vec![], vec![ln], Some(Access { region: rb, index: logical_index(ln) }));
    let c = b.add_inst("mul", Op::Mul, vec![Operand::Produced(a), Operand::Produced(bb)], vec![lm, ln], None);
    let index =
        vec![IndexTerm::Logical { logical: lm, stride: n as i64 }, IndexTerm::Logical { logical: ln, stride: 1 }];
    b.add_inst("st_c", Op::Store, vec![Operand::Produced(c)], vec![lm, ln], Some(Access { region: rc, index }));
    Ok(b)
}

/// `C = A * B` with column-major `m x k`, `k x n` and `m x n` matrices;
/// `m` and `n` are strip-mined with `factors`, `k` is not.
pub fn matmul(m: u64, n: u64, k: u64, factors: &[Vec<u32>], a_stride: u64) -> Result<Backbone, BackboneError> {
    let name = if a_stride == 1 { "matmul" } else { "strided_matmul" };
    let mut b = Backbone::new(name);
    let ra = b.add_region("A", 4, m * k * a_stride);
    let rb = b.add_region("B", 4, k * n);
    let rc = b.add_region("C", 4, m * n);
    let lm = b.add_logical("m", m, 0)?;
    let ln = b.add_logical("n", n, 1)?;
    let lk = b.add_logical("k", k, 2)?;
    b.strip_mine(lm, factors)?;
    b.strip_mine(ln, factors)?;
    let s = a_stride as i64;
    let init = b.add_inst("init", Op::Cast, vec![Operand::Constant(0)], vec![lm, ln], None);
    let a_index =
        vec![IndexTerm::Logical { logical: lm, stride: s }, IndexTerm::Logical { logical: lk, stride: s * m as i64 }];
    let ld_a = b.add_inst("ld_a", Op::Load, vec![], vec![lm, lk], Some(Access { region: ra, index: a_index }));
    let b_index =
        vec![IndexTerm::Logical { logical: lk, stride: 1 }, IndexTerm::Logical { logical: ln, stride: k as i64 }];
    let ld_b = b.add_inst("ld_b", Op::Load, vec![], vec![lk, ln], Some(Access { region: rb, index: b_index }));
    let k_dims = b.logicals[lk].levels.clone();
    let mad = b.add_inst(
        "mad",
        Op::Mad,
        vec![Operand::Produced(ld_a), Operand::Produced(ld_b), Operand::Reduce { init, dims: k_dims }],
        vec![lm, ln, lk],
        None,
    );
    let c_index =
        vec![IndexTerm::Logical { logical: lm, stride: 1 }, IndexTerm::Logical { logical: ln, stride: m as i64 }];
    b.add_inst(
        "st_c",
        Op::Store,
        vec![Operand::Produced(mad)],
        vec![lm, ln],
        Some(Access { region: rc, index: c_index }),
    );
    Ok(b)
}

/// `y = 4 * x[i][j]`, with the load and the product in separate nests.
pub fn point_to_point(m: u64, n: u64) -> Result<Backbone, BackboneError> {
    let mut b = Backbone::new("point_to_point");
    let rx = b.add_region("X", 4, m * n);
    let ry = b.add_region("Y", 4, m * n);
    let li_a = b.add_logical("i_a", m, 0)?;
    let lj_a = b.add_logical("j_a", n, 1)?;
    let li_b = b.add_logical("i_b", m, 0)?;
    let lj_b = b.add_logical("j_b", n, 1)?;
    let index =
        |i, j| vec![IndexTerm::Logical { logical: i, stride: n as i64 }, IndexTerm::Logical { logical: j, stride: 1 }];
    let x =
        b.add_inst("ld_x", Op::Load, vec![], vec![li_a, lj_a], Some(Access { region: rx, index: index(li_a, lj_a) }));
    let y = b.add_inst("mul", Op::Mul, vec![Operand::Constant(4), Operand::Produced(x)], vec![li_b, lj_b], None);
    b.add_inst(
        "st_y",
        Op::Store,
        vec![Operand::Produced(y)],
        vec![li_b, lj_b],
        Some(Access { region: ry, index: index(li_b, lj_b) }),
    );
    b.add_mapping(x, y, 1, &[(li_a, li_b), (lj_a, lj_b)]);
    Ok(b)
}
