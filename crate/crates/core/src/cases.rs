//! Declarative per-parameter data: inducing domain, cells, scaling maps,
//! substitutions, witnesses and period tables, loaded from the TOML files in
//! `cases/`.

use std::collections::HashMap;

use serde::Deserialize;
use thiserror::Error;

use crate::dynamics::{LambdaCase, Point, PointError, Tag};
use crate::expr::{self, Expr, ExprError};
use crate::lattice::Rel;
use crate::qfield::QuadElem;
use crate::subst::{Substitution, SubstError};

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("case file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("constraint {0:?}: {1}")]
    Constraint(String, String),
    #[error("expression {0:?}: {1}")]
    Expr(String, ExprError),
    #[error("point {0:?}: {1}")]
    Point(String, PointError),
    #[error("unknown {0} {1:?}")]
    Unknown(&'static str, String),
    #[error(transparent)]
    Subst(#[from] SubstError),
    #[error("invalid case data: {0}")]
    Invalid(String),
}

/// `px*x + py*y REL r`.
#[derive(Clone, Debug)]
pub struct HalfPlane {
    pub px: QuadElem,
    pub py: QuadElem,
    pub r: QuadElem,
    pub rel: Rel,
    pub text: String,
}

impl HalfPlane {
    pub fn holds(&self, z: &Point) -> bool {
        let v = &(&(&self.px * &z.x) + &(&self.py * &z.y)) - &self.r;
        self.rel.holds(v.signum())
    }

    /// Parses `lhs REL rhs` with both sides affine in `x`, `y`.
    pub fn parse(text: &str, d: u32) -> Result<Self, CaseError> {
        const OPS: [(&str, Rel); 6] = [
            ("<=", Rel::Le),
            (">=", Rel::Ge),
            ("!=", Rel::Ne),
            ("<", Rel::Lt),
            (">", Rel::Gt),
            ("=", Rel::Eq),
        ];
        let bad = |m: &str| CaseError::Constraint(text.to_string(), m.to_string());
        let (pos, sym, rel) = OPS
            .iter()
            .filter_map(|(s, r)| text.find(s).map(|p| (p, *s, *r)))
            .min_by_key(|(p, s, _)| (*p, std::cmp::Reverse(s.len())))
            .ok_or_else(|| bad("no relation"))?;
        let lhs = expr::parse(&text[..pos]).map_err(|e| bad(&e.to_string()))?;
        let rhs = expr::parse(&text[pos + sym.len()..]).map_err(|e| bad(&e.to_string()))?;
        let l = expr::eval_affine(&lhs, d).map_err(|e| bad(&e.to_string()))?;
        let r = expr::eval_affine(&rhs, d).map_err(|e| bad(&e.to_string()))?;
        Ok(HalfPlane {
            px: &l.cx - &r.cx,
            py: &l.cy - &r.cy,
            r: &r.c0 - &l.c0,
            rel,
            text: text.trim().to_string(),
        })
    }

    /// Rewrites a constraint on `V(z)` as a constraint on `z`.
    fn pull_back(&self, v: &VMap) -> HalfPlane {
        // V(z) = c (z - v)
        let px = &self.px * &v.c;
        let py = &self.py * &v.c;
        let r = &(&self.r + &(&px * &v.v.x)) + &(&py * &v.v.y);
        HalfPlane { px, py, r, rel: self.rel, text: self.text.clone() }
    }
}

/// Union of `any` clauses minus the union of `none` clauses. An empty `any`
/// means no restriction. The torus `[0,1)^2` is always implied.
#[derive(Clone, Debug, Default)]
pub struct Region {
    pub any: Vec<Vec<HalfPlane>>,
    pub none: Vec<Vec<HalfPlane>>,
}

impl Region {
    pub fn contains(&self, z: &Point) -> bool {
        let clause = |c: &Vec<HalfPlane>| c.iter().all(|h| h.holds(z));
        z.in_torus()
            && (self.any.is_empty() || self.any.iter().any(clause))
            && !self.none.iter().any(clause)
    }

    /// All half-planes that must hold, when `any` has a single clause.
    pub fn equalities(&self) -> Vec<&HalfPlane> {
        match self.any.as_slice() {
            [one] => one.iter().filter(|h| h.rel == Rel::Eq).collect(),
            _ => Vec::new(),
        }
    }
}

/// `V(z) = c (z - v)`.
#[derive(Clone, Debug)]
pub struct VMap {
    pub c: QuadElem,
    pub v: Point,
}

impl VMap {
    pub fn apply(&self, z: &Point) -> Point {
        z.sub(&self.v).scale(&self.c)
    }

    pub fn invert(&self, w: &Point) -> Point {
        w.scale(&self.c.recip().expect("nonzero scale")).add(&self.v)
    }
}

/// `U(z) = V^{-1}(kappa V(z)) = kappa (z - v) + v`.
#[derive(Clone, Debug)]
pub struct Scaling {
    pub kappa: QuadElem,
    pub vmap: VMap,
}

impl Scaling {
    pub fn scale(&self, z: &Point) -> Point {
        let v = &self.vmap.v;
        z.sub(v).scale(&self.kappa).add(v)
    }

    pub fn unscale(&self, z: &Point) -> Point {
        let v = &self.vmap.v;
        z.sub(v).scale(&self.kappa.recip().expect("nonzero kappa")).add(v)
    }

    /// `U^k` as a scaling with `kappa^k`.
    pub fn power(&self, k: u32) -> Scaling {
        Scaling { kappa: self.kappa.pow(k as i64).expect("unit"), vmap: self.vmap.clone() }
    }
}

#[derive(Clone, Debug)]
pub struct Cell {
    pub label: String,
    pub region: Region,
    pub tau: Vec<u64>,
}

#[derive(Clone, Debug)]
pub struct Partition {
    pub name: String,
    pub cells: Vec<Cell>,
}

impl Partition {
    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.cells.iter().position(|c| c.label == label)
    }

    /// Constant return time of every cell, if all are constant.
    pub fn constant_tau(&self) -> Option<Vec<u64>> {
        self.cells
            .iter()
            .map(|c| match c.tau.as_slice() {
                [t] => Some(*t),
                _ => None,
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Policy {
    Forward,
    Backward,
    Nearest { ties: Direction },
}

/// A morphism between two partitions of the same sub-domain.
#[derive(Clone, Debug)]
pub struct Morphism {
    pub name: String,
    pub source: usize,
    pub target: usize,
    pub subst: Substitution,
}

/// How the renormalization map `S` is built on a sub-domain.
#[derive(Clone, Debug)]
pub struct Scheme {
    pub partition: usize,
    /// Morphisms relating consecutive levels of `U`: a single endomorphism,
    /// or several that alternate between partitions.
    pub levels: Vec<usize>,
    pub policy: Policy,
    /// `(segment letter, offset from segment start) -> direction`.
    pub overrides: HashMap<(usize, u64), Direction>,
    /// Bound on `|s_hat|`: the longest image among the level morphisms.
    pub max_len: u64,
}

/// A condition set `U^k T_hat = T_hat^{eps^k |sigma(l)|} U^k` to audit.
#[derive(Clone, Debug)]
pub struct SubstCheck {
    pub name: String,
    pub chain: Vec<usize>,
    pub power: u32,
}

#[derive(Clone, Debug)]
pub struct Witness {
    pub cycle: Vec<Point>,
}

#[derive(Clone, Debug)]
pub struct Subdomain {
    pub name: String,
    pub region: Region,
    pub scaling: Scaling,
    pub epsilon: i32,
    pub delta: QuadElem,
    pub sample_box: [QuadElem; 4],
    pub partitions: Vec<Partition>,
    pub morphisms: Vec<Morphism>,
    pub scheme: Scheme,
    pub checks: Vec<SubstCheck>,
    pub witnesses: Vec<Witness>,
}

impl Subdomain {
    pub fn vmap(&self) -> &VMap {
        &self.scaling.vmap
    }

    pub fn cell_of(&self, partition: usize, z: &Point) -> Option<usize> {
        if !self.region.contains(z) {
            return None;
        }
        self.partitions[partition].cells.iter().position(|c| c.region.contains(z))
    }

    /// Composite substitution of a check chain, applied right to left.
    pub fn chain_subst(&self, chain: &[usize]) -> Substitution {
        let mut it = chain.iter().rev();
        let first = &self.morphisms[*it.next().expect("non-empty chain")].subst;
        it.fold(first.clone(), |acc, &m| self.morphisms[m].subst.compose(&acc))
    }

    /// The smallest audited power of `U` that maps orbits to orbits on the
    /// scheme partition, and the matching search window.
    pub fn sound_step(&self) -> (u32, i64) {
        self.checks
            .iter()
            .filter(|c| {
                let (src, dst) = self.chain_partitions(&c.chain);
                src == dst && src == self.scheme.partition
            })
            .min_by_key(|c| c.power)
            .filter(|c| c.power > 1)
            .map(|c| (c.power, self.chain_subst(&c.chain).max_image_len() as i64 - 1))
            .unwrap_or((1, self.scheme.max_len as i64 - 1))
    }

    pub fn chain_partitions(&self, chain: &[usize]) -> (usize, usize) {
        let src = self.morphisms[*chain.last().unwrap()].source;
        let dst = self.morphisms[chain[0]].target;
        (src, dst)
    }
}

#[derive(Clone, Debug)]
pub struct PeriodRow {
    pub label: String,
    pub formula_text: String,
    pub formula: Expr,
    pub point: Point,
    pub scaled: bool,
    pub n_max: u32,
    pub subdomain: usize,
}

impl PeriodRow {
    /// The representative point at level `n`.
    pub fn point_at(&self, cd: &CaseData, n: u32) -> Point {
        let u = &cd.subdomains[self.subdomain].scaling;
        (0..if self.scaled { n } else { 0 }).fold(self.point.clone(), |z, _| u.scale(&z))
    }
}

#[derive(Clone, Debug)]
pub struct SpecialPoint {
    pub name: String,
    pub point: Point,
    pub return_time: u64,
    pub hat_period: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct CaseData {
    pub lambda: LambdaCase,
    pub domain: Region,
    pub subdomains: Vec<Subdomain>,
    pub period_rows: Vec<PeriodRow>,
    pub specials: Vec<SpecialPoint>,
    pub max_return: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RMembership {
    /// The forward orbit never meets `D`; the orbit has this period.
    InR { period: u64 },
    ReachesD { steps: u64, point: Point },
}

impl CaseData {
    pub fn tag(&self) -> Tag {
        self.lambda.tag
    }

    pub fn d(&self) -> u32 {
        self.lambda.d()
    }

    pub fn in_domain(&self, z: &Point) -> Option<usize> {
        if !self.domain.contains(z) {
            return None;
        }
        self.subdomains.iter().position(|s| s.region.contains(z))
    }

    pub fn scale(&self, sub: usize, z: &Point) -> Point {
        self.subdomains[sub].scaling.scale(z)
    }

    /// `U^{-1}`, defined on `U(D_sub)`.
    pub fn unscale(&self, sub: usize, z: &Point) -> Result<Point, CaseError> {
        let w = self.subdomains[sub].scaling.unscale(z);
        if self.subdomains[sub].region.contains(&w) {
            Ok(w)
        } else {
            Err(CaseError::Invalid(format!("{z} is not in U({})", self.subdomains[sub].name)))
        }
    }

    pub fn delta_bound(&self, sub: usize) -> &QuadElem {
        &self.subdomains[sub].delta
    }

    pub fn cell_of(&self, z: &Point) -> Option<(usize, &Cell)> {
        let sub = self.in_domain(z)?;
        let s = &self.subdomains[sub];
        let i = s.cell_of(s.scheme.partition, z)?;
        Some((sub, &s.partitions[s.scheme.partition].cells[i]))
    }

    pub fn load(tag: Tag) -> Result<Self, CaseError> {
        parse_case(source(tag))
    }
}

/// Embedded case file text.
pub fn source(tag: Tag) -> &'static str {
    match tag {
        Tag::Gamma => include_str!("../cases/gamma.toml"),
        Tag::NegInvGamma => include_str!("../cases/neg-inv-gamma.toml"),
        Tag::InvGamma => include_str!("../cases/inv-gamma.toml"),
        Tag::NegGamma => include_str!("../cases/neg-gamma.toml"),
        Tag::Sqrt2 => include_str!("../cases/sqrt2.toml"),
        Tag::NegSqrt2 => include_str!("../cases/neg-sqrt2.toml"),
        Tag::Sqrt3 => include_str!("../cases/sqrt3.toml"),
        Tag::NegSqrt3 => include_str!("../cases/neg-sqrt3.toml"),
    }
}

// ---- raw file schema ----

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCase {
    tag: Tag,
    max_return: Option<u64>,
    domain: RawRegion,
    subdomain: Vec<RawSub>,
    #[serde(default)]
    period_row: Vec<RawRow>,
    #[serde(default)]
    special: Vec<RawSpecial>,
}

#[derive(Deserialize, Clone, Copy, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
enum CoordFrame {
    #[default]
    Z,
    V,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawRegion {
    #[serde(default)]
    frame: CoordFrame,
    #[serde(default)]
    any: Vec<Vec<String>>,
    #[serde(default)]
    none: Vec<Vec<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSub {
    name: String,
    region: Option<RawRegion>,
    kappa: String,
    epsilon: i32,
    delta: String,
    v: [String; 2],
    v_scale: String,
    sample_box: [String; 4],
    partition: Vec<RawPartition>,
    morphism: Vec<RawMorphism>,
    scheme: RawScheme,
    #[serde(default)]
    check: Vec<RawCheck>,
    #[serde(default)]
    witness: Vec<RawWitness>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPartition {
    name: String,
    cell: Vec<RawCell>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCell {
    label: String,
    #[serde(default)]
    frame: CoordFrame,
    #[serde(default)]
    any: Vec<Vec<String>>,
    #[serde(default)]
    none: Vec<Vec<String>>,
    #[serde(default)]
    tau: Vec<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMorphism {
    name: String,
    source: String,
    target: String,
    images: HashMap<String, String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScheme {
    partition: String,
    sigma: Vec<String>,
    policy: String,
    #[serde(default)]
    ties: Option<Direction>,
    #[serde(default)]
    overrides: Vec<RawOverride>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOverride {
    letter: String,
    k: u64,
    dir: Direction,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCheck {
    chain: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWitness {
    #[serde(default)]
    frame: CoordFrame,
    cycle: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRow {
    label: String,
    formula: String,
    point: String,
    #[serde(default)]
    frame: CoordFrame,
    #[serde(default)]
    scaled: bool,
    #[serde(default)]
    n_max: u32,
    #[serde(default)]
    subdomain: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpecial {
    name: String,
    point: String,
    #[serde(default)]
    frame: CoordFrame,
    #[serde(default)]
    subdomain: usize,
    return_time: u64,
    #[serde(default)]
    hat_period: Option<u64>,
}

fn konst(s: &str, d: u32) -> Result<QuadElem, CaseError> {
    expr::parse_const(s, d).map_err(|e| CaseError::Expr(s.to_string(), e))
}

fn point(s: &str, d: u32) -> Result<Point, CaseError> {
    Point::parse(s, d).map_err(|e| CaseError::Point(s.to_string(), e))
}

fn clauses(
    raw: &[Vec<String>],
    frame: CoordFrame,
    vmap: Option<&VMap>,
    d: u32,
) -> Result<Vec<Vec<HalfPlane>>, CaseError> {
    raw.iter()
        .map(|clause| {
            clause
                .iter()
                .map(|t| {
                    let h = HalfPlane::parse(t, d)?;
                    match (frame, vmap) {
                        (CoordFrame::Z, _) => Ok(h),
                        (CoordFrame::V, Some(v)) => Ok(h.pull_back(v)),
                        (CoordFrame::V, None) => {
                            Err(CaseError::Invalid("V frame used outside a sub-domain".into()))
                        }
                    }
                })
                .collect()
        })
        .collect()
}

fn region(
    any: &[Vec<String>],
    none: &[Vec<String>],
    frame: CoordFrame,
    vmap: Option<&VMap>,
    d: u32,
) -> Result<Region, CaseError> {
    Ok(Region { any: clauses(any, frame, vmap, d)?, none: clauses(none, frame, vmap, d)? })
}

fn framed_point(s: &str, frame: CoordFrame, vmap: &VMap, d: u32) -> Result<Point, CaseError> {
    let p = point(s, d)?;
    Ok(match frame {
        CoordFrame::Z => p,
        CoordFrame::V => vmap.invert(&p),
    })
}

/// Intersection of two regions (the first must have at most one `any` clause
/// or the second none).
fn intersect(outer: &Region, inner: &Region) -> Region {
    let any = match (outer.any.as_slice(), inner.any.as_slice()) {
        ([], _) => inner.any.clone(),
        (_, []) => outer.any.clone(),
        (o, i) => o
            .iter()
            .flat_map(|a| i.iter().map(move |b| a.iter().chain(b).cloned().collect()))
            .collect(),
    };
    let none = outer.none.iter().chain(&inner.none).cloned().collect();
    Region { any, none }
}

pub fn parse_case(text: &str) -> Result<CaseData, CaseError> {
    let raw: RawCase = toml::from_str(text)?;
    let lambda = LambdaCase::new(raw.tag);
    let d = lambda.d();
    let domain = region(&raw.domain.any, &raw.domain.none, CoordFrame::Z, None, d)?;
    let mut subdomains = Vec::new();
    let mut max_tau = 0u64;
    for rs in &raw.subdomain {
        let vmap = VMap {
            c: konst(&rs.v_scale, d)?,
            v: Point::new(konst(&rs.v[0], d)?, konst(&rs.v[1], d)?),
        };
        let kappa = konst(&rs.kappa, d)?;
        let sub_region = match &rs.region {
            Some(r) => intersect(&domain, &region(&r.any, &r.none, r.frame, Some(&vmap), d)?),
            None => domain.clone(),
        };
        let mut partitions = Vec::new();
        for rp in &rs.partition {
            let mut cells = Vec::new();
            for rc in &rp.cell {
                max_tau = max_tau.max(rc.tau.iter().copied().max().unwrap_or(0));
                cells.push(Cell {
                    label: rc.label.clone(),
                    region: region(&rc.any, &rc.none, rc.frame, Some(&vmap), d)?,
                    tau: rc.tau.clone(),
                });
            }
            partitions.push(Partition { name: rp.name.clone(), cells });
        }
        let part_index = |name: &str| {
            partitions
                .iter()
                .position(|p| p.name == name)
                .ok_or_else(|| CaseError::Unknown("partition", name.to_string()))
        };
        let mut morphisms = Vec::new();
        for rm in &rs.morphism {
            let (src, dst) = (part_index(&rm.source)?, part_index(&rm.target)?);
            let src_labels: Vec<&str> =
                partitions[src].cells.iter().map(|c| c.label.as_str()).collect();
            let dst_labels: Vec<&str> =
                partitions[dst].cells.iter().map(|c| c.label.as_str()).collect();
            let subst = Substitution::from_labels(&src_labels, &dst_labels, &rm.images)?;
            morphisms.push(Morphism { name: rm.name.clone(), source: src, target: dst, subst });
        }
        let morph_index = |name: &str| {
            morphisms
                .iter()
                .position(|m| m.name == name)
                .ok_or_else(|| CaseError::Unknown("morphism", name.to_string()))
        };
        let sp = part_index(&rs.scheme.partition)?;
        let levels =
            rs.scheme.sigma.iter().map(|n| morph_index(n)).collect::<Result<Vec<_>, _>>()?;
        if levels.is_empty() {
            return Err(CaseError::Invalid("scheme needs at least one morphism".into()));
        }
        let ties = rs.scheme.ties.unwrap_or(Direction::Forward);
        let policy = match rs.scheme.policy.as_str() {
            "forward" => Policy::Forward,
            "backward" => Policy::Backward,
            "nearest" => Policy::Nearest { ties },
            other => return Err(CaseError::Unknown("policy", other.to_string())),
        };
        let mut overrides = HashMap::new();
        for o in &rs.scheme.overrides {
            let letter = partitions[sp]
                .index_of(&o.letter)
                .ok_or_else(|| CaseError::Unknown("letter", o.letter.clone()))?;
            overrides.insert((letter, o.k), o.dir);
        }
        let max_len =
            levels.iter().map(|&m| morphisms[m].subst.max_image_len()).max().unwrap_or(1) as u64;
        let checks = rs
            .check
            .iter()
            .map(|c| {
                let chain = c.chain.iter().map(|n| morph_index(n)).collect::<Result<Vec<_>, _>>()?;
                Ok(SubstCheck { name: c.chain.join("."), power: chain.len() as u32, chain })
            })
            .collect::<Result<Vec<_>, CaseError>>()?;
        let witnesses = rs
            .witness
            .iter()
            .map(|w| {
                Ok(Witness {
                    cycle: w
                        .cycle
                        .iter()
                        .map(|p| framed_point(p, w.frame, &vmap, d))
                        .collect::<Result<_, CaseError>>()?,
                })
            })
            .collect::<Result<Vec<_>, CaseError>>()?;
        let sample_box = [
            konst(&rs.sample_box[0], d)?,
            konst(&rs.sample_box[1], d)?,
            konst(&rs.sample_box[2], d)?,
            konst(&rs.sample_box[3], d)?,
        ];
        if rs.epsilon.abs() != 1 {
            return Err(CaseError::Invalid("epsilon must be 1 or -1".into()));
        }
        subdomains.push(Subdomain {
            name: rs.name.clone(),
            region: sub_region,
            scaling: Scaling { kappa, vmap },
            epsilon: rs.epsilon,
            delta: konst(&rs.delta, d)?,
            sample_box,
            partitions,
            morphisms,
            scheme: Scheme { partition: sp, levels, policy, overrides, max_len },
            checks,
            witnesses,
        });
    }
    let mut period_rows = Vec::new();
    for r in &raw.period_row {
        let sub = subdomains
            .get(r.subdomain)
            .ok_or_else(|| CaseError::Invalid("period row sub-domain".into()))?;
        period_rows.push(PeriodRow {
            label: r.label.clone(),
            formula_text: r.formula.clone(),
            formula: expr::parse(&r.formula).map_err(|e| CaseError::Expr(r.formula.clone(), e))?,
            point: framed_point(&r.point, r.frame, sub.vmap(), d)?,
            scaled: r.scaled,
            n_max: r.n_max,
            subdomain: r.subdomain,
        });
    }
    let mut specials = Vec::new();
    for s in &raw.special {
        let sub = subdomains
            .get(s.subdomain)
            .ok_or_else(|| CaseError::Invalid("special point sub-domain".into()))?;
        specials.push(SpecialPoint {
            name: s.name.clone(),
            point: framed_point(&s.point, s.frame, sub.vmap(), d)?,
            return_time: s.return_time,
            hat_period: s.hat_period,
        });
    }
    let max_return = raw.max_return.unwrap_or(max_tau).max(1);
    Ok(CaseData { lambda, domain, subdomains, period_rows, specials, max_return })
}
