//! Signed distance oracles: analytic primitives and watertight meshes.
//!
//! Mesh distance magnitude comes from an exact point-to-triangle search
//! accelerated by a bounding volume hierarchy; the sign comes from ray
//! crossing parity. Parity rays that graze an edge, vertex, or coplanar
//! triangle are unreliable, so any marginal intersection aborts the cast and
//! the query retries along the next entry of a fixed direction table. The
//! directions are irrational-ish on purpose: axis-aligned rays through
//! lattice-built meshes hit vertices constantly.
//!
//! Also here: surface samplers for every oracle (area-weighted via an alias
//! table for meshes), the near-surface/uniform training batch generator, and
//! the voxelized intersection-over-union metric.

use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::mesh::TriangleMesh;
use crate::rng::Rng;

/// Fraction of the oracle bbox diagonal used as the near-surface noise
/// standard deviation when sampling training points.
pub const NEAR_SURFACE_STD_FRAC: f64 = 0.01;
/// Fraction of a training batch drawn uniformly over the unit cube; the
/// rest hugs the surface.
pub const UNIFORM_FRACTION: f64 = 0.125;

// ---------------------------------------------------------------------------
// Exact point-triangle distance.

#[inline]
fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
fn norm_sq(a: [f64; 3]) -> f64 {
    dot(a, a)
}

/// Squared distance from `p` to triangle `abc`, exact by Voronoi region
/// classification.
pub fn tri_dist_sq(p: [f64; 3], a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return norm_sq(ap);
    }
    let bp = sub(p, b);
    let d3 = dot(ab, bp);
    let d4 = dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return norm_sq(bp);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let t = d1 / (d1 - d3);
        return norm_sq(sub(ap, [ab[0] * t, ab[1] * t, ab[2] * t]));
    }
    let cp = sub(p, c);
    let d5 = dot(ab, cp);
    let d6 = dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return norm_sq(cp);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let t = d2 / (d2 - d6);
        return norm_sq(sub(ap, [ac[0] * t, ac[1] * t, ac[2] * t]));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && d4 - d3 >= 0.0 && d5 - d6 >= 0.0 {
        let t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        let bc = sub(c, b);
        return norm_sq(sub(bp, [bc[0] * t, bc[1] * t, bc[2] * t]));
    }
    // Interior: project onto the plane.
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    let closest = [
        a[0] + ab[0] * v + ac[0] * w,
        a[1] + ab[1] * v + ac[1] * w,
        a[2] + ab[2] * v + ac[2] * w,
    ];
    norm_sq(sub(p, closest))
}

// ---------------------------------------------------------------------------
// BVH.

#[derive(Debug, Clone)]
struct BvhNode {
    lo: [f64; 3],
    hi: [f64; 3],
    /// Child node indices, or -1 on leaves.
    left: i32,
    right: i32,
    /// Leaf triangle range into `Bvh::order`.
    start: u32,
    count: u32,
}

/// Median-split bounding volume hierarchy over triangle centroids.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<BvhNode>,
    order: Vec<u32>,
    root: i32,
}

const BVH_LEAF: usize = 4;

impl Bvh {
    pub fn new(mesh: &TriangleMesh) -> Bvh {
        let n = mesh.triangle_count();
        let mut order: Vec<u32> = (0..n as u32).collect();
        let centroids: Vec<[f64; 3]> = (0..n)
            .map(|t| {
                let tri = mesh.triangle(t);
                [
                    (tri[0][0] + tri[1][0] + tri[2][0]) / 3.0,
                    (tri[0][1] + tri[1][1] + tri[2][1]) / 3.0,
                    (tri[0][2] + tri[1][2] + tri[2][2]) / 3.0,
                ]
            })
            .collect();
        let mut nodes = Vec::with_capacity(2 * n);
        let root = build(mesh, &centroids, &mut order, 0, n, &mut nodes);
        Bvh { nodes, order, root }
    }

    /// Squared distance to the closest point on the mesh surface.
    pub fn nearest_sq(&self, mesh: &TriangleMesh, p: [f64; 3]) -> f64 {
        let mut best = f64::INFINITY;
        let mut stack = [0i32; 64];
        let mut top = 0usize;
        stack[top] = self.root;
        top += 1;
        while top > 0 {
            top -= 1;
            let node = &self.nodes[stack[top] as usize];
            if box_dist_sq(node.lo, node.hi, p) >= best {
                continue;
            }
            if node.left < 0 {
                for &t in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    let tri = mesh.triangle(t as usize);
                    let d = tri_dist_sq(p, tri[0], tri[1], tri[2]);
                    if d < best {
                        best = d;
                    }
                }
            } else {
                // Visit the nearer child first for tighter pruning.
                let dl = box_dist_sq(
                    self.nodes[node.left as usize].lo,
                    self.nodes[node.left as usize].hi,
                    p,
                );
                let dr = box_dist_sq(
                    self.nodes[node.right as usize].lo,
                    self.nodes[node.right as usize].hi,
                    p,
                );
                let (near, far) = if dl <= dr {
                    (node.left, node.right)
                } else {
                    (node.right, node.left)
                };
                stack[top] = far;
                top += 1;
                stack[top] = near;
                top += 1;
            }
        }
        best
    }

    /// Number of forward ray crossings, or None if any intersection was too
    /// marginal to trust.
    fn ray_crossings(&self, mesh: &TriangleMesh, orig: [f64; 3], dir: [f64; 3]) -> Option<usize> {
        let inv = [1.0 / dir[0], 1.0 / dir[1], 1.0 / dir[2]];
        let mut crossings = 0usize;
        let mut stack = [0i32; 64];
        let mut top = 0usize;
        stack[top] = self.root;
        top += 1;
        while top > 0 {
            top -= 1;
            let node = &self.nodes[stack[top] as usize];
            if !ray_box(node.lo, node.hi, orig, inv) {
                continue;
            }
            if node.left < 0 {
                for &t in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    let tri = mesh.triangle(t as usize);
                    match ray_tri(orig, dir, tri[0], tri[1], tri[2]) {
                        RayHit::Hit => crossings += 1,
                        RayHit::Miss => {}
                        RayHit::Marginal => return None,
                    }
                }
            } else {
                stack[top] = node.left;
                top += 1;
                stack[top] = node.right;
                top += 1;
            }
        }
        Some(crossings)
    }
}

fn build(
    mesh: &TriangleMesh,
    centroids: &[[f64; 3]],
    order: &mut [u32],
    start: usize,
    count: usize,
    nodes: &mut Vec<BvhNode>,
) -> i32 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &t in &order[start..start + count] {
        let tri = mesh.triangle(t as usize);
        for v in tri {
            for d in 0..3 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
    }
    let idx = nodes.len() as i32;
    nodes.push(BvhNode {
        lo,
        hi,
        left: -1,
        right: -1,
        start: start as u32,
        count: count as u32,
    });
    if count <= BVH_LEAF {
        return idx;
    }
    // Split along the widest centroid axis at the median; ties in the sort
    // fall back to triangle index so the build is deterministic.
    let mut clo = [f64::INFINITY; 3];
    let mut chi = [f64::NEG_INFINITY; 3];
    for &t in &order[start..start + count] {
        for d in 0..3 {
            clo[d] = clo[d].min(centroids[t as usize][d]);
            chi[d] = chi[d].max(centroids[t as usize][d]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (chi[a] - clo[a]).total_cmp(&(chi[b] - clo[b])))
        .unwrap();
    let mid = count / 2;
    order[start..start + count].select_nth_unstable_by(mid, |&a, &b| {
        centroids[a as usize][axis]
            .total_cmp(&centroids[b as usize][axis])
            .then(a.cmp(&b))
    });
    let left = build(mesh, centroids, order, start, mid, nodes);
    let right = build(mesh, centroids, order, start + mid, count - mid, nodes);
    nodes[idx as usize].left = left;
    nodes[idx as usize].right = right;
    nodes[idx as usize].count = 0;
    idx
}

fn box_dist_sq(lo: [f64; 3], hi: [f64; 3], p: [f64; 3]) -> f64 {
    let mut d = 0.0;
    for i in 0..3 {
        let c = p[i].clamp(lo[i], hi[i]);
        d += (p[i] - c) * (p[i] - c);
    }
    d
}

/// Slab test for the ray t in [0, inf). Zero direction components produce
/// infinities that the min/max logic absorbs.
fn ray_box(lo: [f64; 3], hi: [f64; 3], orig: [f64; 3], inv: [f64; 3]) -> bool {
    let mut tmin = 0.0f64;
    let mut tmax = f64::INFINITY;
    for d in 0..3 {
        let t1 = (lo[d] - orig[d]) * inv[d];
        let t2 = (hi[d] - orig[d]) * inv[d];
        // f64::min/max discard a NaN operand (0 * inf at a slab boundary).
        tmin = tmin.max(t1.min(t2));
        tmax = tmax.min(t1.max(t2));
    }
    tmin <= tmax
}

enum RayHit {
    Miss,
    Hit,
    Marginal,
}

const DET_EPS: f64 = 1e-12;
const BARY_EPS: f64 = 1e-9;
const T_EPS: f64 = 1e-12;

/// Moller-Trumbore with a marginal band: barycentric coordinates within
/// BARY_EPS of an edge, near-zero determinants, and hits at the ray origin
/// all report Marginal so the caller can re-cast instead of miscounting.
fn ray_tri(orig: [f64; 3], dir: [f64; 3], a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> RayHit {
    let e1 = sub(b, a);
    let e2 = sub(c, a);
    let pv = cross(dir, e2);
    let det = dot(e1, pv);
    if det.abs() < DET_EPS {
        // Parallel; only dangerous if the slab test let us get here.
        return RayHit::Marginal;
    }
    let inv = 1.0 / det;
    let tv = sub(orig, a);
    let u = dot(tv, pv) * inv;
    if !(-BARY_EPS..=1.0 + BARY_EPS).contains(&u) {
        return RayHit::Miss;
    }
    let qv = cross(tv, e1);
    let v = dot(dir, qv) * inv;
    if v < -BARY_EPS || u + v > 1.0 + BARY_EPS {
        return RayHit::Miss;
    }
    if u < BARY_EPS || v < BARY_EPS || u + v > 1.0 - BARY_EPS {
        return RayHit::Marginal;
    }
    let t = dot(e2, qv) * inv;
    if t < -T_EPS {
        RayHit::Miss
    } else if t <= T_EPS {
        RayHit::Marginal
    } else {
        RayHit::Hit
    }
}

/// Fixed fallback directions for parity casts. Deliberately irrational-ish
/// so lattice geometry cannot align with them; normalized on first use.
fn parity_directions() -> &'static [[f64; 3]; 16] {
    use std::sync::OnceLock;
    static DIRS: OnceLock<[[f64; 3]; 16]> = OnceLock::new();
    DIRS.get_or_init(|| {
        let raw: [[f64; 3]; 16] = [
            [0.5381936646, 0.7639320225, 0.3562071871],
            [-0.6180339887, 0.5419271045, 0.4142135624],
            [0.3247179572, -0.7320508076, 0.5773502692],
            [0.7071067812, 0.2360679775, -0.6457513111],
            [-0.4472135955, -0.5549581321, -0.6881909602],
            [0.8541019662, -0.3166247904, 0.2912878475],
            [-0.2679491924, 0.8284271247, -0.4641016151],
            [0.1622776602, 0.4494897428, 0.8602325267],
            [-0.7548776662, -0.1231056256, 0.6055512755],
            [0.3722813233, -0.8989794856, -0.1925824036],
            [-0.5677643628, 0.3588989435, -0.7416573868],
            [0.9219544457, 0.1400549446, 0.3588989435],
            [-0.1098901099, -0.6457513111, 0.7549834435],
            [0.4689655172, 0.6055512755, -0.6324555320],
            [-0.8306623863, 0.4832396974, 0.1622776602],
            [0.2236067977, -0.2679491924, -0.9364916731],
        ];
        let mut out = [[0.0; 3]; 16];
        for (o, r) in out.iter_mut().zip(raw.iter()) {
            let n = norm_sq(*r).sqrt();
            for d in 0..3 {
                o[d] = r[d] / n;
            }
        }
        out
    })
}

// ---------------------------------------------------------------------------
// Oracles.

/// Closed-form signed distance primitives, all in scene coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalyticSdf {
    Sphere { center: [f64; 3], radius: f64 },
    Box { center: [f64; 3], half: [f64; 3] },
    /// Ring in the z = center.z plane with tube radius `minor`.
    Torus { center: [f64; 3], major: f64, minor: f64 },
}

impl AnalyticSdf {
    pub fn signed_distance(&self, p: [f64; 3]) -> f64 {
        match *self {
            AnalyticSdf::Sphere { center, radius } => norm_sq(sub(p, center)).sqrt() - radius,
            AnalyticSdf::Box { center, half } => {
                let q = [
                    (p[0] - center[0]).abs() - half[0],
                    (p[1] - center[1]).abs() - half[1],
                    (p[2] - center[2]).abs() - half[2],
                ];
                let outside = [q[0].max(0.0), q[1].max(0.0), q[2].max(0.0)];
                norm_sq(outside).sqrt() + q[0].max(q[1]).max(q[2]).min(0.0)
            }
            AnalyticSdf::Torus {
                center,
                major,
                minor,
            } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                let dz = p[2] - center[2];
                let ring = (dx * dx + dy * dy).sqrt() - major;
                (ring * ring + dz * dz).sqrt() - minor
            }
        }
    }

    pub fn bbox(&self) -> ([f64; 3], [f64; 3]) {
        match *self {
            AnalyticSdf::Sphere { center, radius } => (
                [center[0] - radius, center[1] - radius, center[2] - radius],
                [center[0] + radius, center[1] + radius, center[2] + radius],
            ),
            AnalyticSdf::Box { center, half } => (
                [center[0] - half[0], center[1] - half[1], center[2] - half[2]],
                [center[0] + half[0], center[1] + half[1], center[2] + half[2]],
            ),
            AnalyticSdf::Torus {
                center,
                major,
                minor,
            } => {
                let r = major + minor;
                (
                    [center[0] - r, center[1] - r, center[2] - minor],
                    [center[0] + r, center[1] + r, center[2] + minor],
                )
            }
        }
    }

    /// Uniform point on the surface.
    pub fn surface_point(&self, rng: &mut Rng) -> [f64; 3] {
        match *self {
            AnalyticSdf::Sphere { center, radius } => {
                // Normalized Gaussian direction.
                loop {
                    let v = [rng.normal(), rng.normal(), rng.normal()];
                    let n = norm_sq(v).sqrt();
                    if n > 1e-12 {
                        return [
                            center[0] + radius * v[0] / n,
                            center[1] + radius * v[1] / n,
                            center[2] + radius * v[2] / n,
                        ];
                    }
                }
            }
            AnalyticSdf::Box { center, half } => {
                let areas = [
                    half[1] * half[2], // +-x faces
                    half[0] * half[2],
                    half[0] * half[1],
                ];
                let total = 2.0 * (areas[0] + areas[1] + areas[2]);
                let mut pick = rng.uniform(0.0, total);
                let mut axis = 2;
                for (i, &a) in areas.iter().enumerate() {
                    if pick < 2.0 * a {
                        axis = i;
                        break;
                    }
                    pick -= 2.0 * a;
                }
                let side = if rng.f64() < 0.5 { -1.0 } else { 1.0 };
                let mut p = [0.0; 3];
                for d in 0..3 {
                    p[d] = if d == axis {
                        center[d] + side * half[d]
                    } else {
                        center[d] + rng.uniform(-half[d], half[d])
                    };
                }
                p
            }
            AnalyticSdf::Torus {
                center,
                major,
                minor,
            } => {
                // Rejection on the tube angle: surface density is
                // proportional to major + minor cos(phi).
                loop {
                    let theta = rng.uniform(0.0, std::f64::consts::TAU);
                    let phi = rng.uniform(0.0, std::f64::consts::TAU);
                    let accept = (major + minor * phi.cos()) / (major + minor);
                    if rng.f64() < accept {
                        let ring = major + minor * phi.cos();
                        return [
                            center[0] + ring * theta.cos(),
                            center[1] + ring * theta.sin(),
                            center[2] + minor * phi.sin(),
                        ];
                    }
                }
            }
        }
    }
}

/// Watertight mesh with acceleration structures for distance, sign, and
/// surface sampling.
#[derive(Debug, Clone)]
pub struct MeshSdf {
    pub mesh: TriangleMesh,
    bvh: Bvh,
    alias: AliasTable,
}

impl MeshSdf {
    /// Fails unless the mesh is closed; parity signs are meaningless
    /// otherwise.
    pub fn new(mesh: TriangleMesh) -> Result<MeshSdf> {
        mesh.check_watertight()?;
        let bvh = Bvh::new(&mesh);
        let areas: Vec<f64> = (0..mesh.triangle_count())
            .map(|t| {
                let tri = mesh.triangle(t);
                0.5 * norm_sq(cross(sub(tri[1], tri[0]), sub(tri[2], tri[0]))).sqrt()
            })
            .collect();
        let alias = AliasTable::new(&areas)?;
        Ok(MeshSdf { mesh, bvh, alias })
    }

    pub fn signed_distance(&self, p: [f64; 3]) -> f64 {
        let d = self.bvh.nearest_sq(&self.mesh, p).sqrt();
        if d == 0.0 {
            return 0.0;
        }
        for dir in parity_directions() {
            if let Some(crossings) = self.bvh.ray_crossings(&self.mesh, p, *dir) {
                return if crossings % 2 == 1 { -d } else { d };
            }
        }
        // Sixteen independent marginal casts do not happen for closed
        // meshes; treat as outside rather than aborting a whole run.
        log::debug!("all parity casts marginal at {p:?}; assuming outside");
        d
    }

    /// Area-uniform point on the surface.
    pub fn surface_point(&self, rng: &mut Rng) -> [f64; 3] {
        let t = self.alias.sample(rng);
        let tri = self.mesh.triangle(t);
        // Square-root warp gives the uniform triangle density.
        let r1 = rng.f64().sqrt();
        let r2 = rng.f64();
        let w = [1.0 - r1, r1 * (1.0 - r2), r1 * r2];
        [
            w[0] * tri[0][0] + w[1] * tri[1][0] + w[2] * tri[2][0],
            w[0] * tri[0][1] + w[1] * tri[1][1] + w[2] * tri[2][1],
            w[0] * tri[0][2] + w[1] * tri[1][2] + w[2] * tri[2][2],
        ]
    }
}

/// A source of ground-truth signed distance.
#[derive(Debug, Clone)]
pub enum SdfOracle {
    Analytic(AnalyticSdf),
    Mesh(Box<MeshSdf>),
}

impl SdfOracle {
    pub fn signed_distance(&self, p: [f64; 3]) -> f64 {
        match self {
            SdfOracle::Analytic(a) => a.signed_distance(p),
            SdfOracle::Mesh(m) => m.signed_distance(p),
        }
    }

    pub fn surface_point(&self, rng: &mut Rng) -> [f64; 3] {
        match self {
            SdfOracle::Analytic(a) => a.surface_point(rng),
            SdfOracle::Mesh(m) => m.surface_point(rng),
        }
    }

    pub fn bbox(&self) -> ([f64; 3], [f64; 3]) {
        match self {
            SdfOracle::Analytic(a) => a.bbox(),
            SdfOracle::Mesh(m) => m.mesh.bbox(),
        }
    }
}

// ---------------------------------------------------------------------------
// Alias table.

/// Walker alias table for O(1) discrete sampling.
#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasTable {
    pub fn new(weights: &[f64]) -> Result<AliasTable> {
        if weights.is_empty() {
            return Err(Error::config("alias table needs at least one weight"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::config("alias weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::config("alias weights sum to zero"));
        }
        let n = weights.len();
        let mut prob: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut alias: Vec<u32> = (0..n as u32).collect();
        let mut small: Vec<u32> = Vec::new();
        let mut large: Vec<u32> = Vec::new();
        for (i, &p) in prob.iter().enumerate() {
            if p < 1.0 {
                small.push(i as u32);
            } else {
                large.push(i as u32);
            }
        }
        // Stack processing order is index-deterministic.
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            alias[s as usize] = l;
            prob[l as usize] -= 1.0 - prob[s as usize];
            if prob[l as usize] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // Residual entries are exactly 1 up to rounding.
        for &i in small.iter().chain(large.iter()) {
            prob[i as usize] = 1.0;
        }
        Ok(AliasTable { prob, alias })
    }

    pub fn sample(&self, rng: &mut Rng) -> usize {
        let i = rng.range(0..self.prob.len());
        if rng.f64() < self.prob[i] {
            i
        } else {
            self.alias[i] as usize
        }
    }
}

// ---------------------------------------------------------------------------
// Training batches and metrics.

#[derive(Debug, Clone)]
pub struct SdfSamples {
    /// Flat xyz, clamped to the unit cube, `n * 3`.
    pub coords: Vec<f64>,
    /// Ground-truth signed distance at each coordinate.
    pub targets: Vec<f64>,
}

/// Draws a training batch: 7/8 of the points are surface points displaced
/// by Gaussian noise (std 1% of the oracle bbox diagonal), 1/8 uniform in
/// the unit cube. Coordinates are drawn sequentially from `rng`; targets
/// are evaluated in deterministic chunks.
pub fn sample_training_points(
    oracle: &SdfOracle,
    n: usize,
    rng: &mut Rng,
    mode: ExecMode,
) -> SdfSamples {
    let (lo, hi) = oracle.bbox();
    let diag = norm_sq(sub(hi, lo)).sqrt();
    let std = NEAR_SURFACE_STD_FRAC * diag;
    let n_uniform = (n as f64 * UNIFORM_FRACTION) as usize;
    let n_near = n - n_uniform;
    let mut coords = Vec::with_capacity(n * 3);
    for i in 0..n {
        if i < n_near {
            let s = oracle.surface_point(rng);
            for &c in s.iter() {
                coords.push((c + std * rng.normal()).clamp(0.0, 1.0));
            }
        } else {
            for _ in 0..3 {
                coords.push(rng.f64());
            }
        }
    }
    let parts = exec::map_chunks(mode, n, exec::DEFAULT_CHUNK, |_, range| {
        let mut t = Vec::with_capacity(range.len());
        for j in range {
            t.push(oracle.signed_distance([coords[j * 3], coords[j * 3 + 1], coords[j * 3 + 2]]));
        }
        t
    });
    let mut targets = Vec::with_capacity(n);
    for p in parts {
        targets.extend_from_slice(&p);
    }
    SdfSamples { coords, targets }
}

/// Intersection over union of the sets {f <= 0} and {g <= 0} sampled at the
/// centers of a res^3 voxel grid over the unit cube. Both sets empty counts
/// as a perfect match.
pub fn iou_voxels<F, G>(res: usize, f: F, g: G, mode: ExecMode) -> f64
where
    F: Fn([f64; 3]) -> f64 + Sync,
    G: Fn([f64; 3]) -> f64 + Sync,
{
    let total = res * res * res;
    let parts = exec::map_chunks(mode, total, exec::DEFAULT_CHUNK, |_, range| {
        let mut inter = 0u64;
        let mut union = 0u64;
        for i in range {
            let z = i / (res * res);
            let y = (i / res) % res;
            let x = i % res;
            let p = [
                (x as f64 + 0.5) / res as f64,
                (y as f64 + 0.5) / res as f64,
                (z as f64 + 0.5) / res as f64,
            ];
            let a = f(p) <= 0.0;
            let b = g(p) <= 0.0;
            if a && b {
                inter += 1;
            }
            if a || b {
                union += 1;
            }
        }
        (inter, union)
    });
    let (inter, union) = exec::reduce_in_order(parts, (0u64, 0u64), |(ai, au), (bi, bu)| {
        (ai + bi, au + bu)
    });
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}
