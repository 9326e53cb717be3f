//! Geometry, error sampling, syndrome extraction and homology classification
//! on the k x k torus, plus the 1d ring used by the repetition-code analysis.

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LatticeError {
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("configuration is not closed (syndrome has {0} defects)")]
    NotClosed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Orientation {
    Horizontal,
    Vertical,
}

/// Canonical edge coordinate on the torus. A horizontal edge at (x, y) runs
/// from vertex (x, y) to (x+1 mod k, y); a vertical edge runs to (x, y+1 mod k).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EdgeCoord {
    pub x: usize,
    pub y: usize,
    pub orientation: Orientation,
}

/// Vertex coordinate, components in 0..k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Vertex {
    pub y: usize,
    pub x: usize,
}

impl Vertex {
    pub fn new(x: usize, y: usize) -> Self {
        Vertex { x, y }
    }
}

/// The k x k toric lattice: k^2 vertices, 2k^2 edges. Each vertex owns one
/// outgoing horizontal and one outgoing vertical edge, giving a bijection
/// between edge coordinates and indices 0..2k^2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorusLattice {
    k: usize,
}

impl TorusLattice {
    pub fn new(k: usize) -> Self {
        assert!(k >= 2, "torus linear size must be at least 2");
        TorusLattice { k }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_vertices(&self) -> usize {
        self.k * self.k
    }

    pub fn num_edges(&self) -> usize {
        2 * self.k * self.k
    }

    pub fn vertex_index(&self, v: Vertex) -> usize {
        v.y * self.k + v.x
    }

    pub fn vertex_at(&self, idx: usize) -> Vertex {
        Vertex { y: idx / self.k, x: idx % self.k }
    }

    /// Row-major edge linearization: (y*k + x)*2 + orientation bit.
    pub fn edge_index(&self, e: EdgeCoord) -> usize {
        (e.y * self.k + e.x) * 2
            + match e.orientation {
                Orientation::Horizontal => 0,
                Orientation::Vertical => 1,
            }
    }

    pub fn edge_at(&self, idx: usize) -> EdgeCoord {
        let orientation = if idx % 2 == 0 { Orientation::Horizontal } else { Orientation::Vertical };
        let v = idx / 2;
        EdgeCoord { x: v % self.k, y: v / self.k, orientation }
    }

    pub fn edge_endpoints(&self, idx: usize) -> (Vertex, Vertex) {
        let e = self.edge_at(idx);
        let u = Vertex { x: e.x, y: e.y };
        let v = match e.orientation {
            Orientation::Horizontal => Vertex { x: (e.x + 1) % self.k, y: e.y },
            Orientation::Vertical => Vertex { x: e.x, y: (e.y + 1) % self.k },
        };
        (u, v)
    }

    /// The four edges incident to a vertex.
    pub fn vertex_edges(&self, v: Vertex) -> [usize; 4] {
        let k = self.k;
        let h_out = self.edge_index(EdgeCoord { x: v.x, y: v.y, orientation: Orientation::Horizontal });
        let h_in = self.edge_index(EdgeCoord { x: (v.x + k - 1) % k, y: v.y, orientation: Orientation::Horizontal });
        let v_out = self.edge_index(EdgeCoord { x: v.x, y: v.y, orientation: Orientation::Vertical });
        let v_in = self.edge_index(EdgeCoord { x: v.x, y: (v.y + k - 1) % k, orientation: Orientation::Vertical });
        [h_out, h_in, v_out, v_in]
    }

    /// L1 distance with wraparound mod k in each coordinate.
    pub fn vertex_distance(&self, u: Vertex, v: Vertex) -> usize {
        let k = self.k;
        let dx = u.x.abs_diff(v.x);
        let dy = u.y.abs_diff(v.y);
        dx.min(k - dx) + dy.min(k - dy)
    }

    /// The set of vertices at distance exactly t from `center`.
    pub fn diamond(&self, center: Vertex, t: usize) -> Vec<Vertex> {
        assert!(t >= 1);
        let mut out = Vec::new();
        for idx in 0..self.num_vertices() {
            let v = self.vertex_at(idx);
            if self.vertex_distance(center, v) == t {
                out.push(v);
            }
        }
        out
    }

    /// Signed wrap-aware displacement from u to v along one axis: the shorter
    /// direction, ties broken toward positive.
    fn axis_step(&self, from: usize, to: usize) -> i64 {
        let k = self.k as i64;
        let d = (to as i64 - from as i64).rem_euclid(k);
        if d == 0 {
            0
        } else if d <= k - d {
            d
        } else {
            d - k
        }
    }

    /// A deterministic geodesic from u to v: walk along x toward the nearer
    /// wrap direction first, then along y. XOR-applying the returned edges
    /// moves a defect from u to v.
    pub fn shortest_path(&self, u: Vertex, v: Vertex) -> Vec<usize> {
        let k = self.k;
        let mut edges = Vec::with_capacity(self.vertex_distance(u, v));
        let mut x = u.x;
        let dx = self.axis_step(u.x, v.x);
        for _ in 0..dx.abs() {
            if dx > 0 {
                edges.push(self.edge_index(EdgeCoord { x, y: u.y, orientation: Orientation::Horizontal }));
                x = (x + 1) % k;
            } else {
                x = (x + k - 1) % k;
                edges.push(self.edge_index(EdgeCoord { x, y: u.y, orientation: Orientation::Horizontal }));
            }
        }
        let mut y = u.y;
        let dy = self.axis_step(u.y, v.y);
        for _ in 0..dy.abs() {
            if dy > 0 {
                edges.push(self.edge_index(EdgeCoord { x, y, orientation: Orientation::Vertical }));
                y = (y + 1) % k;
            } else {
                y = (y + k - 1) % k;
                edges.push(self.edge_index(EdgeCoord { x, y, orientation: Orientation::Vertical }));
            }
        }
        debug_assert_eq!(edges.len(), self.vertex_distance(u, v));
        edges
    }
}

/// A circle of k qubits (edges) over k vertices; edge i joins vertices i and
/// i+1 mod k.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RingLattice {
    k: usize,
}

impl RingLattice {
    pub fn new(k: usize) -> Self {
        assert!(k >= 2);
        RingLattice { k }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_edges(&self) -> usize {
        self.k
    }

    pub fn vertex_edges(&self, v: usize) -> [usize; 2] {
        [(v + self.k - 1) % self.k, v]
    }

    pub fn vertex_distance(&self, u: usize, v: usize) -> usize {
        let d = u.abs_diff(v);
        d.min(self.k - d)
    }

    /// Geodesic edge set from u to v; ties at even k broken toward the
    /// positive direction.
    pub fn shortest_path(&self, u: usize, v: usize) -> Vec<usize> {
        let k = self.k as i64;
        let d = (v as i64 - u as i64).rem_euclid(k);
        let step = if d == 0 {
            return Vec::new();
        } else if d <= k - d {
            1i64
        } else {
            -1i64
        };
        let n = if step > 0 { d } else { k - d };
        let mut edges = Vec::with_capacity(n as usize);
        let mut x = u as i64;
        for _ in 0..n {
            if step > 0 {
                edges.push(x.rem_euclid(k) as usize);
                x += 1;
            } else {
                x -= 1;
                edges.push(x.rem_euclid(k) as usize);
            }
        }
        edges
    }
}

/// A bit set over the edges of a lattice marking Z-errors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorConfig {
    num_edges: usize,
    words: Vec<u64>,
}

impl ErrorConfig {
    pub fn new(num_edges: usize) -> Self {
        ErrorConfig { num_edges, words: vec![0; num_edges.div_ceil(64)] }
    }

    pub fn for_torus(lat: &TorusLattice) -> Self {
        Self::new(lat.num_edges())
    }

    pub fn for_ring(lat: &RingLattice) -> Self {
        Self::new(lat.num_edges())
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn get(&self, edge: usize) -> bool {
        debug_assert!(edge < self.num_edges);
        self.words[edge / 64] >> (edge % 64) & 1 == 1
    }

    pub fn flip(&mut self, edge: usize) {
        debug_assert!(edge < self.num_edges);
        self.words[edge / 64] ^= 1 << (edge % 64);
    }

    pub fn xor_assign(&mut self, other: &ErrorConfig) {
        debug_assert_eq!(self.num_edges, other.num_edges);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn clear(&mut self) {
        self.words.fill(0);
    }

    pub fn iter_edges(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(i, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let b = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(i * 64 + b)
                }
            })
        })
    }
}

/// The set of violated star checks ("particles"), in canonical order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Syndrome {
    pub defects: Vec<Vertex>,
}

/// Winding parities of a closed configuration around the two torus cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HomologyClass {
    pub wrap_h: bool,
    pub wrap_v: bool,
}

impl HomologyClass {
    pub const TRIVIAL: HomologyClass = HomologyClass { wrap_h: false, wrap_v: false };

    pub fn is_trivial(&self) -> bool {
        !self.wrap_h && !self.wrap_v
    }

    pub fn xor(&self, other: &HomologyClass) -> HomologyClass {
        HomologyClass { wrap_h: self.wrap_h ^ other.wrap_h, wrap_v: self.wrap_v ^ other.wrap_v }
    }
}

/// Samples each edge independently with probability p, drawing one stream
/// value per edge in fixed edge order.
pub fn sample_errors<R: Rng>(num_edges: usize, p: f64, rng: &mut R) -> Result<ErrorConfig, LatticeError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(LatticeError::BadProbability(p));
    }
    let mut cfg = ErrorConfig::new(num_edges);
    for e in 0..num_edges {
        if rng.gen::<f64>() < p {
            cfg.flip(e);
        }
    }
    Ok(cfg)
}

/// A vertex is a defect iff an odd number of its incident edges carry errors.
pub fn syndrome_of(lat: &TorusLattice, cfg: &ErrorConfig) -> Syndrome {
    let mut parity = vec![false; lat.num_vertices()];
    for e in cfg.iter_edges() {
        let (u, v) = lat.edge_endpoints(e);
        parity[lat.vertex_index(u)] ^= true;
        parity[lat.vertex_index(v)] ^= true;
    }
    let defects = parity
        .iter()
        .enumerate()
        .filter(|(_, &d)| d)
        .map(|(i, _)| lat.vertex_at(i))
        .collect();
    Syndrome { defects }
}

pub fn ring_syndrome_of(lat: &RingLattice, cfg: &ErrorConfig) -> Vec<usize> {
    let k = lat.k();
    let mut parity = vec![false; k];
    for e in cfg.iter_edges() {
        parity[e] ^= true;
        parity[(e + 1) % k] ^= true;
    }
    parity.iter().enumerate().filter(|(_, &d)| d).map(|(i, _)| i).collect()
}

/// Homology class of a closed configuration: wrap_h is the parity of
/// horizontal edges crossing the cut column x = 0, wrap_v the parity of
/// vertical edges crossing the cut row y = 0.
pub fn homology_class(lat: &TorusLattice, cfg: &ErrorConfig) -> Result<HomologyClass, LatticeError> {
    let syn = syndrome_of(lat, cfg);
    if !syn.defects.is_empty() {
        return Err(LatticeError::NotClosed(syn.defects.len()));
    }
    Ok(homology_class_unchecked(lat, cfg))
}

pub(crate) fn homology_class_unchecked(lat: &TorusLattice, cfg: &ErrorConfig) -> HomologyClass {
    let mut wrap_h = false;
    let mut wrap_v = false;
    for e in cfg.iter_edges() {
        let c = lat.edge_at(e);
        match c.orientation {
            Orientation::Horizontal if c.x == 0 => wrap_h ^= true,
            Orientation::Vertical if c.y == 0 => wrap_v ^= true,
            _ => {}
        }
    }
    HomologyClass { wrap_h, wrap_v }
}

/// Re-indexes every edge to its dual (rotate 90 degrees about the midpoint).
/// An involution: `to_dual(to_dual(c)) == c`.
pub fn to_dual(lat: &TorusLattice, cfg: &ErrorConfig) -> ErrorConfig {
    let mut dual = ErrorConfig::new(cfg.num_edges());
    for e in cfg.iter_edges() {
        let c = lat.edge_at(e);
        let flipped = EdgeCoord {
            x: c.x,
            y: c.y,
            orientation: match c.orientation {
                Orientation::Horizontal => Orientation::Vertical,
                Orientation::Vertical => Orientation::Horizontal,
            },
        };
        dual.flip(lat.edge_index(flipped));
    }
    dual
}

/// XOR of the four edges bounding the plaquette whose lower-left vertex is v.
pub fn plaquette_boundary(lat: &TorusLattice, v: Vertex) -> ErrorConfig {
    let k = lat.k();
    let mut cfg = ErrorConfig::for_torus(lat);
    cfg.flip(lat.edge_index(EdgeCoord { x: v.x, y: v.y, orientation: Orientation::Horizontal }));
    cfg.flip(lat.edge_index(EdgeCoord { x: v.x, y: (v.y + 1) % k, orientation: Orientation::Horizontal }));
    cfg.flip(lat.edge_index(EdgeCoord { x: v.x, y: v.y, orientation: Orientation::Vertical }));
    cfg.flip(lat.edge_index(EdgeCoord { x: (v.x + 1) % k, y: v.y, orientation: Orientation::Vertical }));
    cfg
}
