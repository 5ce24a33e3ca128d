//! Conforming tetrahedral meshes: topology, global orientation, boundary
//! classification, vertex patches, hat functions and red refinement.
//!
//! Edges and faces are stored with ascending global vertex ids; that order
//! fixes every tangent and normal used by the degrees of freedom.

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FaceTag {
    Interior,
    Dirichlet,
    Neumann,
}

/// Local edges of a tetrahedron as pairs of local vertex indices.
pub const LOCAL_EDGES: [[usize; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];

/// Local vertices of the face opposite local vertex `i`, ascending.
pub fn local_face(i: usize) -> [usize; 3] {
    match i {
        0 => [1, 2, 3],
        1 => [0, 2, 3],
        2 => [0, 1, 3],
        _ => [0, 1, 2],
    }
}

#[derive(Clone, Debug)]
pub struct Element {
    pub verts: [usize; 4],
    pub x: [[f64; 3]; 4],
    /// Unsigned volume.
    pub vol: f64,
    pub signed_vol: f64,
    /// Gradients of the barycentric coordinates.
    pub grad: [[f64; 3]; 4],
    /// Diameter (longest edge).
    pub h: f64,
    /// Inscribed-ball diameter.
    pub rho: f64,
    pub edges: [usize; 6],
    /// `faces[i]` is opposite local vertex `i`.
    pub faces: [usize; 4],
}

impl Element {
    fn new(verts: [usize; 4], nodes: &[[f64; 3]]) -> Self {
        let x = verts.map(|v| nodes[v]);
        let d = [sub(x[1], x[0]), sub(x[2], x[0]), sub(x[3], x[0])];
        let det = dot(d[0], cross(d[1], d[2]));
        let signed_vol = det / 6.0;
        // rows of J^{-1} where J has columns d[i]
        let inv = [cross(d[1], d[2]), cross(d[2], d[0]), cross(d[0], d[1])].map(|r| scale(r, 1.0 / det));
        let g0 = scale(add(add(inv[0], inv[1]), inv[2]), -1.0);
        let grad = [g0, inv[0], inv[1], inv[2]];
        let h = LOCAL_EDGES.iter().map(|e| norm(sub(x[e[1]], x[e[0]]))).fold(0.0, f64::max);
        let area: f64 = (0..4)
            .map(|i| {
                let f = local_face(i);
                0.5 * norm(cross(sub(x[f[1]], x[f[0]]), sub(x[f[2]], x[f[0]])))
            })
            .sum();
        let rho = 2.0 * 3.0 * signed_vol.abs() / area;
        Element { verts, x, vol: signed_vol.abs(), signed_vol, grad, h, rho, edges: [0; 6], faces: [0; 4] }
    }

    /// Physical point of barycentric coordinates `lam`.
    pub fn point(&self, lam: &[f64; 4]) -> [f64; 3] {
        let mut p = [0.0; 3];
        for i in 0..4 {
            for k in 0..3 {
                p[k] += lam[i] * self.x[i][k];
            }
        }
        p
    }

    /// Barycentric coordinates of physical point `p`.
    pub fn barycentric(&self, p: [f64; 3]) -> [f64; 4] {
        let r = sub(p, self.x[0]);
        let l1 = dot(self.grad[1], r);
        let l2 = dot(self.grad[2], r);
        let l3 = dot(self.grad[3], r);
        [1.0 - l1 - l2 - l3, l1, l2, l3]
    }

    pub fn local_index(&self, v: usize) -> Option<usize> {
        self.verts.iter().position(|&w| w == v)
    }

    pub fn centroid(&self) -> [f64; 3] {
        self.point(&[0.25; 4])
    }
}

#[derive(Clone, Debug)]
pub struct Face {
    pub verts: [usize; 3],
    pub tag: FaceTag,
    /// Unit normal of the ascending vertex triple.
    pub normal: [f64; 3],
    pub area: f64,
    pub elems: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Edge {
    pub verts: [usize; 2],
    pub length: f64,
    /// Unit tangent from the lower to the higher vertex id.
    pub tangent: [f64; 3],
}

#[derive(Clone, Debug)]
pub struct TetMesh {
    pub nodes: Vec<[f64; 3]>,
    pub elems: Vec<Element>,
    pub faces: Vec<Face>,
    pub edges: Vec<Edge>,
    pub vert_elems: Vec<Vec<usize>>,
    face_index: HashMap<[usize; 3], usize>,
    uid: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PatchClass {
    Interior,
    Neumann,
    /// Touches at least one Dirichlet face; `gamma_d` lists those faces.
    Dirichlet { gamma_d: Vec<usize> },
}

#[derive(Clone, Debug)]
pub struct VertexPatch {
    pub vertex: usize,
    pub elems: Vec<usize>,
    /// Local index of the patch vertex inside each patch element.
    pub local: Vec<usize>,
    pub class: PatchClass,
    pub diameter: f64,
    /// Faces lying on the patch boundary (used once inside the patch).
    pub boundary_faces: Vec<usize>,
}

impl VertexPatch {
    pub fn gamma_d(&self) -> &[usize] {
        match &self.class {
            PatchClass::Dirichlet { gamma_d } => gamma_d,
            _ => &[],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryKind {
    /// Every boundary face Dirichlet (no essential condition).
    Dirichlet,
    /// Every boundary face Neumann.
    Neumann,
    /// Faces on the planes x = xmin and x = xmax Neumann, the rest Dirichlet.
    Mixed,
}

impl std::str::FromStr for BoundaryKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "D" | "d" | "dirichlet" => Ok(BoundaryKind::Dirichlet),
            "N" | "n" | "neumann" => Ok(BoundaryKind::Neumann),
            "mixed" | "M" => Ok(BoundaryKind::Mixed),
            _ => Err(Error::Parse(format!("unknown boundary kind '{s}'"))),
        }
    }
}

fn sorted3(mut f: [usize; 3]) -> [usize; 3] {
    f.sort_unstable();
    f
}

impl TetMesh {
    /// Build and validate a mesh. `bfaces` must tag every boundary face
    /// exactly once with `Dirichlet` or `Neumann`.
    pub fn build(nodes: Vec<[f64; 3]>, tets: Vec<[usize; 4]>, bfaces: &[([usize; 3], FaceTag)]) -> Result<Self> {
        if tets.is_empty() {
            return Err(Error::Invalid("mesh has no tetrahedra".into()));
        }
        let nn = nodes.len();
        let mut elems = Vec::with_capacity(tets.len());
        for (t, tv) in tets.iter().enumerate() {
            if tv.iter().any(|&v| v >= nn) {
                return Err(Error::Invalid(format!("tet {t} references a missing node")));
            }
            let mut s = *tv;
            s.sort_unstable();
            if s.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Invalid(format!("tet {t} repeats a vertex")));
            }
            let e = Element::new(*tv, &nodes);
            if !(e.vol > 1e-14 * e.h.powi(3)) {
                return Err(Error::Degenerate { tet: t, volume: e.signed_vol });
            }
            elems.push(e);
        }

        let mut face_index: HashMap<[usize; 3], usize> = HashMap::new();
        let mut faces: Vec<Face> = Vec::new();
        let mut edge_index: HashMap<[usize; 2], usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        for (t, el) in elems.iter_mut().enumerate() {
            for (i, le) in LOCAL_EDGES.iter().enumerate() {
                let (a, b) = (el.verts[le[0]].min(el.verts[le[1]]), el.verts[le[0]].max(el.verts[le[1]]));
                let id = *edge_index.entry([a, b]).or_insert_with(|| {
                    let d = sub(nodes[b], nodes[a]);
                    let l = norm(d);
                    edges.push(Edge { verts: [a, b], length: l, tangent: scale(d, 1.0 / l) });
                    edges.len() - 1
                });
                el.edges[i] = id;
            }
            for i in 0..4 {
                let lf = local_face(i);
                let key = sorted3(lf.map(|l| el.verts[l]));
                let id = *face_index.entry(key).or_insert_with(|| {
                    let n = cross(sub(nodes[key[1]], nodes[key[0]]), sub(nodes[key[2]], nodes[key[0]]));
                    let a = norm(n);
                    faces.push(Face { verts: key, tag: FaceTag::Interior, normal: scale(n, 1.0 / a), area: 0.5 * a, elems: vec![] });
                    faces.len() - 1
                });
                faces[id].elems.push(t);
                el.faces[i] = id;
            }
        }
        if let Some(f) = faces.iter().find(|f| f.elems.len() > 2) {
            return Err(Error::NonConforming(format!("face {:?} is shared by {} tetrahedra", f.verts, f.elems.len())));
        }
        check_hanging(&nodes, &elems)?;

        let mut tagged: HashMap<[usize; 3], FaceTag> = HashMap::new();
        for (f, tag) in bfaces {
            let key = sorted3(*f);
            if *tag == FaceTag::Interior {
                return Err(Error::BoundaryTag(format!("face {key:?} tagged interior")));
            }
            if tagged.insert(key, *tag).is_some() {
                return Err(Error::BoundaryTag(format!("face {key:?} tagged twice")));
            }
            match face_index.get(&key) {
                None => return Err(Error::BoundaryTag(format!("tagged face {key:?} is not a mesh face"))),
                Some(&id) if faces[id].elems.len() != 1 => {
                    return Err(Error::BoundaryTag(format!("tagged face {key:?} is an interior face")))
                }
                Some(&id) => faces[id].tag = *tag,
            }
        }
        if let Some(f) = faces.iter().find(|f| f.elems.len() == 1 && f.tag == FaceTag::Interior) {
            return Err(Error::BoundaryTag(format!("boundary face {:?} carries no tag", f.verts)));
        }

        let mut vert_elems = vec![Vec::new(); nn];
        for (t, el) in elems.iter().enumerate() {
            for &v in &el.verts {
                vert_elems[v].push(t);
            }
        }
        static NEXT: AtomicU64 = AtomicU64::new(0);
        let uid = NEXT.fetch_add(1, Ordering::Relaxed);
        Ok(TetMesh { nodes, elems, faces, edges, vert_elems, face_index, uid })
    }

    /// Process-unique id of this mesh (shared by clones).
    pub fn uid(&self) -> u64 {
        self.uid
    }

    pub fn n_vertices(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elems(&self) -> usize {
        self.elems.len()
    }

    pub fn face_id(&self, verts: [usize; 3]) -> Option<usize> {
        self.face_index.get(&sorted3(verts)).copied()
    }

    /// Vertices used by at least one element.
    pub fn active_vertices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&v| !self.vert_elems[v].is_empty())
    }

    pub fn tets(&self) -> Vec<[usize; 4]> {
        self.elems.iter().map(|e| e.verts).collect()
    }

    pub fn boundary_faces(&self) -> Vec<([usize; 3], FaceTag)> {
        self.faces.iter().filter(|f| f.tag != FaceTag::Interior).map(|f| (f.verts, f.tag)).collect()
    }

    /// `max_K h_K / rho_K`.
    pub fn shape_regularity(&self) -> f64 {
        self.elems.iter().map(|e| e.h / e.rho).fold(0.0, f64::max)
    }

    pub fn max_h(&self) -> f64 {
        self.elems.iter().map(|e| e.h).fold(0.0, f64::max)
    }

    pub fn has_neumann(&self) -> bool {
        self.faces.iter().any(|f| f.tag == FaceTag::Neumann)
    }

    pub fn has_dirichlet(&self) -> bool {
        self.faces.iter().any(|f| f.tag == FaceTag::Dirichlet)
    }

    pub fn vertex_patch(&self, a: usize) -> Result<VertexPatch> {
        if a >= self.nodes.len() || self.vert_elems[a].is_empty() {
            return Err(Error::Invalid(format!("vertex {a} is not a mesh vertex")));
        }
        let elems = self.vert_elems[a].clone();
        let local = elems.iter().map(|&t| self.elems[t].local_index(a).unwrap()).collect();
        let mut count: HashMap<usize, usize> = HashMap::new();
        let mut gamma_d = Vec::new();
        let mut on_boundary = false;
        for &t in &elems {
            for &f in &self.elems[t].faces {
                *count.entry(f).or_default() += 1;
                let face = &self.faces[f];
                if face.tag != FaceTag::Interior && face.verts.contains(&a) {
                    on_boundary = true;
                    if face.tag == FaceTag::Dirichlet && !gamma_d.contains(&f) {
                        gamma_d.push(f);
                    }
                }
            }
        }
        gamma_d.sort_unstable();
        let mut boundary_faces: Vec<usize> = count.into_iter().filter(|&(_, c)| c == 1).map(|(f, _)| f).collect();
        boundary_faces.sort_unstable();
        let class = if !gamma_d.is_empty() {
            PatchClass::Dirichlet { gamma_d }
        } else if on_boundary {
            PatchClass::Neumann
        } else {
            PatchClass::Interior
        };
        let mut pts: Vec<usize> = elems.iter().flat_map(|&t| self.elems[t].verts).collect();
        pts.sort_unstable();
        pts.dedup();
        let mut diameter = 0.0f64;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                diameter = diameter.max(norm(sub(self.nodes[pts[i]], self.nodes[pts[j]])));
            }
        }
        Ok(VertexPatch { vertex: a, elems, local, class, diameter, boundary_faces })
    }

    /// Value and gradient of the hat function of `patch.vertex` at physical
    /// point `x` of element `elem`.
    pub fn hat_eval(&self, patch: &VertexPatch, elem: usize, x: [f64; 3]) -> Result<(f64, [f64; 3])> {
        let pos = patch
            .elems
            .iter()
            .position(|&t| t == elem)
            .ok_or_else(|| Error::Invalid(format!("element {elem} is not in the patch of vertex {}", patch.vertex)))?;
        let el = &self.elems[elem];
        let lam = el.barycentric(x);
        if lam.iter().any(|&l| l < -1e-10) {
            return Err(Error::Invalid(format!("point {x:?} lies outside element {elem}")));
        }
        let i = patch.local[pos];
        Ok((lam[i], el.grad[i]))
    }

    /// Red refinement: each tetrahedron into eight, keeping the local vertex
    /// order so that path-ordered (Kuhn) tetrahedra stay congruent.
    pub fn uniform_refine(&self) -> Result<TetMesh> {
        let mut nodes = self.nodes.clone();
        let mut mid: HashMap<[usize; 2], usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, nodes: &mut Vec<[f64; 3]>| -> usize {
            let key = [a.min(b), a.max(b)];
            *mid.entry(key).or_insert_with(|| {
                nodes.push(scale(add(nodes[a], nodes[b]), 0.5));
                nodes.len() - 1
            })
        };
        let mut tets = Vec::with_capacity(8 * self.elems.len());
        for el in &self.elems {
            let [x0, x1, x2, x3] = el.verts;
            let m01 = midpoint(x0, x1, &mut nodes);
            let m02 = midpoint(x0, x2, &mut nodes);
            let m03 = midpoint(x0, x3, &mut nodes);
            let m12 = midpoint(x1, x2, &mut nodes);
            let m13 = midpoint(x1, x3, &mut nodes);
            let m23 = midpoint(x2, x3, &mut nodes);
            tets.extend_from_slice(&[
                [x0, m01, m02, m03],
                [m01, x1, m12, m13],
                [m02, m12, x2, m23],
                [m03, m13, m23, x3],
                [m01, m02, m03, m13],
                [m01, m02, m12, m13],
                [m02, m03, m13, m23],
                [m02, m12, m13, m23],
            ]);
        }
        let mut bf = Vec::new();
        for f in self.faces.iter().filter(|f| f.tag != FaceTag::Interior) {
            let [a, b, c] = f.verts;
            let ab = midpoint(a, b, &mut nodes);
            let ac = midpoint(a, c, &mut nodes);
            let bc = midpoint(b, c, &mut nodes);
            for t in [[a, ab, ac], [ab, b, bc], [ac, bc, c], [ab, bc, ac]] {
                bf.push((t, f.tag));
            }
        }
        TetMesh::build(nodes, tets, &bf)
    }

    /// Elements sharing a vertex with `e` or with one of those neighbours.
    pub fn second_neighbourhood(&self, e: usize) -> Vec<usize> {
        let ring = |set: &[usize]| -> Vec<usize> {
            let mut out: Vec<usize> =
                set.iter().flat_map(|&t| self.elems[t].verts).flat_map(|v| self.vert_elems[v].iter().copied()).collect();
            out.sort_unstable();
            out.dedup();
            out
        };
        ring(&ring(&[e]))
    }

    /// Elements sharing a vertex with `e`.
    pub fn neighbourhood(&self, e: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.elems[e].verts.iter().flat_map(|&v| self.vert_elems[v].iter().copied()).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Tag every boundary face of `tets` from its centroid.
    pub fn from_tets_with(nodes: Vec<[f64; 3]>, tets: Vec<[usize; 4]>, tag: impl Fn(&[[f64; 3]; 3]) -> FaceTag) -> Result<Self> {
        let mut count: HashMap<[usize; 3], usize> = HashMap::new();
        for t in &tets {
            for i in 0..4 {
                *count.entry(sorted3(local_face(i).map(|l| t[l]))).or_default() += 1;
            }
        }
        let mut bf: Vec<([usize; 3], FaceTag)> =
            count.into_iter().filter(|&(_, c)| c == 1).map(|(f, _)| (f, tag(&f.map(|v| nodes[v])))).collect();
        bf.sort_unstable_by_key(|x| x.0);
        TetMesh::build(nodes, tets, &bf)
    }

    pub fn reference_tet(bc: BoundaryKind) -> Result<Self> {
        let nodes = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        TetMesh::from_tets_with(nodes, vec![[0, 1, 2, 3]], boundary_rule(bc, 0.0, 1.0))
    }

    /// Six-tetrahedron Kuhn split of the unit cube, refined `refine` times.
    pub fn cube_kuhn(refine: usize, bc: BoundaryKind) -> Result<Self> {
        let mut nodes = Vec::with_capacity(8);
        for k in 0..2 {
            for j in 0..2 {
                for i in 0..2 {
                    nodes.push([i as f64, j as f64, k as f64]);
                }
            }
        }
        let bit = [1usize, 2, 4];
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let tets = perms.iter().map(|p| [0, bit[p[0]], bit[p[0]] + bit[p[1]], 7]).collect();
        let mut m = TetMesh::from_tets_with(nodes, tets, boundary_rule(bc, 0.0, 1.0))?;
        for _ in 0..refine {
            m = m.uniform_refine()?;
        }
        Ok(m)
    }

    /// Mesh from a generator spec (`reftet`, `cube-kuhn`,
    /// `cube-kuhn:refined=k`, optional `bc=D|N|mixed`) or a mesh file path.
    pub fn from_spec(spec: &str) -> Result<Self> {
        let (name, opts) = match spec.split_once(':') {
            Some((n, o)) => (n, o),
            None => (spec, ""),
        };
        let mut refine = 0usize;
        let mut bc = BoundaryKind::Dirichlet;
        for kv in opts.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Parse(format!("bad mesh option '{kv}'")))?;
            match k.trim() {
                "refined" => refine = v.trim().parse().map_err(|_| Error::Parse(format!("bad refinement '{v}'")))?,
                "bc" => bc = v.trim().parse()?,
                _ => return Err(Error::Parse(format!("unknown mesh option '{k}'"))),
            }
        }
        match name {
            "reftet" => {
                let mut m = TetMesh::reference_tet(bc)?;
                for _ in 0..refine {
                    m = m.uniform_refine()?;
                }
                Ok(m)
            }
            "cube-kuhn" => TetMesh::cube_kuhn(refine, bc),
            _ => TetMesh::read(Path::new(spec)),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        TetMesh::parse(&std::fs::read_to_string(path)?)
    }

    /// Parse the `$nodes` / `$tets` / `$bfaces` text format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let mut nodes = Vec::new();
        let mut tets = Vec::new();
        let mut bf = Vec::new();
        let bad = |l: &str| Error::Parse(format!("bad line '{l}'"));
        while let Some(head) = lines.next() {
            let mut it = head.split_whitespace();
            let section = it.next().unwrap_or("");
            let n: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(head))?;
            for _ in 0..n {
                let l = lines.next().ok_or_else(|| Error::Parse(format!("section {section} ended early")))?;
                let f: Vec<&str> = l.split_whitespace().collect();
                match section {
                    "$nodes" => {
                        let v: Vec<f64> = f.iter().map(|s| s.parse().map_err(|_| bad(l))).collect::<Result<_>>()?;
                        if v.len() != 3 {
                            return Err(bad(l));
                        }
                        nodes.push([v[0], v[1], v[2]]);
                    }
                    "$tets" => {
                        let v: Vec<usize> = f.iter().map(|s| s.parse().map_err(|_| bad(l))).collect::<Result<_>>()?;
                        if v.len() != 4 {
                            return Err(bad(l));
                        }
                        tets.push([v[0], v[1], v[2], v[3]]);
                    }
                    "$bfaces" => {
                        if f.len() != 4 {
                            return Err(bad(l));
                        }
                        let v: Vec<usize> = f[..3].iter().map(|s| s.parse().map_err(|_| bad(l))).collect::<Result<_>>()?;
                        let tag = match f[3] {
                            "D" => FaceTag::Dirichlet,
                            "N" => FaceTag::Neumann,
                            t => return Err(Error::Parse(format!("unknown face tag '{t}'"))),
                        };
                        bf.push(([v[0], v[1], v[2]], tag));
                    }
                    _ => return Err(Error::Parse(format!("unknown section '{section}'"))),
                }
            }
        }
        TetMesh::build(nodes, tets, &bf)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("$nodes {}\n", self.nodes.len());
        for p in &self.nodes {
            s += &format!("{} {} {}\n", p[0], p[1], p[2]);
        }
        s += &format!("$tets {}\n", self.elems.len());
        for e in &self.elems {
            s += &format!("{} {} {} {}\n", e.verts[0], e.verts[1], e.verts[2], e.verts[3]);
        }
        let b = self.boundary_faces();
        s += &format!("$bfaces {}\n", b.len());
        for (f, t) in b {
            s += &format!("{} {} {} {}\n", f[0], f[1], f[2], if t == FaceTag::Dirichlet { "D" } else { "N" });
        }
        s
    }
}

fn boundary_rule(bc: BoundaryKind, lo: f64, hi: f64) -> impl Fn(&[[f64; 3]; 3]) -> FaceTag {
    move |p| match bc {
        BoundaryKind::Dirichlet => FaceTag::Dirichlet,
        BoundaryKind::Neumann => FaceTag::Neumann,
        BoundaryKind::Mixed => {
            let on = |v: f64| p.iter().all(|q| (q[0] - v).abs() < 1e-12);
            if on(lo) || on(hi) {
                FaceTag::Neumann
            } else {
                FaceTag::Dirichlet
            }
        }
    }
}

/// Reject vertices lying in the closure of a tetrahedron they do not belong to.
fn check_hanging(nodes: &[[f64; 3]], elems: &[Element]) -> Result<()> {
    let mut used = vec![false; nodes.len()];
    for e in elems {
        for &v in &e.verts {
            used[v] = true;
        }
    }
    let mut order: Vec<usize> = (0..nodes.len()).filter(|&v| used[v]).collect();
    order.sort_by(|&a, &b| nodes[a][0].total_cmp(&nodes[b][0]));
    let xs: Vec<f64> = order.iter().map(|&v| nodes[v][0]).collect();
    for (t, e) in elems.iter().enumerate() {
        let tol = 1e-10 * e.h;
        let lo = e.x.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min) - tol;
        let hi = e.x.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max) + tol;
        let start = xs.partition_point(|&x| x < lo);
        for &v in &order[start..] {
            if nodes[v][0] > hi {
                break;
            }
            if e.verts.contains(&v) {
                continue;
            }
            let lam = e.barycentric(nodes[v]);
            if lam.iter().all(|&l| l > -1e-10) {
                return Err(Error::NonConforming(format!("vertex {v} lies on tetrahedron {t} without being one of its vertices")));
            }
        }
    }
    Ok(())
}

#[inline]
pub fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
#[inline]
pub fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}
#[inline]
pub fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}
#[inline]
pub fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
#[inline]
pub fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}
#[inline]
pub fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}
