//! Per-point residual scoring of a cloud against a map.
//!
//! Input clouds use the usual vehicle convention (x forward, y left, z up).
//! The beam model works in a frame with y up and z forward, so covariances
//! are permuted between the two.

use std::io::{self, BufRead, Write};

use kdtree::distance::squared_euclidean;
use kdtree::KdTree;

use resel_core::linalg::sym3_eigen_sorted;
use resel_core::selection::select;
use resel_core::uncertainty::{pattern_ellipsoid, residual_uncertainty, BeamNoise};
use resel_core::{
    BeamModel, Ellipsoid3, LineResidual, Mat3, PlaneResidual, Residual, ScoredResidual, SelectionParams,
    Vec3, Vec6,
};

pub const PLANE_RATIO: f64 = 0.1;
pub const LINE_RATIO: f64 = 0.1;

#[derive(Debug)]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for ParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Reads `x y z` triples, one per line. `#` starts a comment.
pub fn read_xyz<R: BufRead>(r: R) -> Result<Vec<Vec3>, ParseError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| ParseError { line: i + 1, message: e.to_string() })?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(ParseError { line: i + 1, message: format!("expected 3 fields, got {}", fields.len()) });
        }
        let mut xyz = [0.0; 3];
        for (slot, f) in xyz.iter_mut().zip(&fields) {
            *slot = f
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| ParseError { line: i + 1, message: format!("not a finite number: '{f}'") })?;
        }
        out.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
    }
    Ok(out)
}

// Beam-frame index of each vehicle axis: x -> z, y -> x, z -> y.
const TO_BEAM: [usize; 3] = [2, 0, 1];

fn to_beam_frame(p: &Vec3) -> Vec3 {
    Vec3::new(p.y, p.z, p.x)
}

/// Measurement covariance of a vehicle-frame point.
pub fn point_covariance(noise: &BeamNoise, p: &Vec3) -> Mat3 {
    let cs = noise.covariance_at(&to_beam_frame(p));
    Mat3::from_fn(|i, j| cs[(TO_BEAM[i], TO_BEAM[j])])
}

/// Plane when the smallest spread is small against the middle one, line
/// when the middle is small against the largest.
pub fn classify(neighbors: &[Vec3]) -> Option<Residual> {
    if neighbors.len() < 3 {
        return None;
    }
    let n = neighbors.len() as f64;
    let c = neighbors.iter().sum::<Vec3>() / n;
    let cov = neighbors.iter().map(|p| (p - c) * (p - c).transpose()).sum::<Mat3>() / n;
    let (l, v) = sym3_eigen_sorted(&cov);
    let (l0, l1, l2) = (l[0].max(0.0), l[1].max(0.0), l[2].max(0.0));
    if l1 > 0.0 && l0 < PLANE_RATIO * l1 {
        let normal = v.column(0).into_owned().normalize();
        return PlaneResidual::new(Vec3::zeros(), c, normal).ok().map(Residual::Plane);
    }
    if l2 > 0.0 && l1 < LINE_RATIO * l2 {
        let dir = v.column(2).into_owned().normalize();
        return LineResidual::new(Vec3::zeros(), c, dir).ok().map(Residual::Line);
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub point: Vec3,
    pub scored: Option<ScoredResidual>,
    pub selected: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreOptions {
    pub k: usize,
    pub max_neighbor_dist: f64,
    pub selection: SelectionParams,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self { k: 5, max_neighbor_dist: 1.0, selection: SelectionParams::default() }
    }
}

pub fn score_cloud(cloud: &[Vec3], map: &[Vec3], beam: &BeamModel, opts: &ScoreOptions) -> Vec<ScoreRow> {
    let noise = BeamNoise::new(beam);
    let mut tree: KdTree<f64, usize, [f64; 3]> = KdTree::new(3);
    for (i, p) in map.iter().enumerate() {
        // Only non-finite coordinates are rejected, and read_xyz filters those.
        let _ = tree.add([p.x, p.y, p.z], i);
    }
    let max_d2 = opts.max_neighbor_dist * opts.max_neighbor_dist;

    let mut rows = Vec::with_capacity(cloud.len());
    let mut scored = Vec::new();
    for (id, p) in cloud.iter().enumerate() {
        let found = if map.is_empty() {
            Vec::new()
        } else {
            tree.nearest(&[p.x, p.y, p.z], opts.k, &squared_euclidean).unwrap_or_default()
        };
        let neighbors: Vec<Vec3> = found.iter().filter(|(d2, _)| *d2 <= max_d2).map(|(_, &i)| map[i]).collect();
        let entry = if neighbors.len() < opts.k { None } else { score_point(id, p, &neighbors, &noise) };
        if let Some(s) = &entry {
            scored.push(*s);
        }
        rows.push(ScoreRow { point: *p, scored: entry, selected: false });
    }
    for id in select(&scored, &opts.selection) {
        rows[id].selected = true;
    }
    rows
}

fn score_point(id: usize, p: &Vec3, neighbors: &[Vec3], noise: &BeamNoise) -> Option<ScoredResidual> {
    let residual = classify(neighbors)?.with_point(*p);
    let source = Ellipsoid3::from_parts(*p, point_covariance(noise, p));
    let fused: Vec<Ellipsoid3> =
        neighbors.iter().map(|q| Ellipsoid3::from_parts(*q, point_covariance(noise, q))).collect();
    let target = pattern_ellipsoid(&fused).ok()?;
    let phi = residual_uncertainty(&source, &target, residual.kind());
    ScoredResidual::new(id, residual.kind(), residual.sensitivity(), phi).ok()
}

pub const HEADER: &str = "x,y,z,kind,phi,s1,s2,s3,s4,s5,s6,psi1,psi2,psi3,psi4,psi5,psi6,selected";

fn join(v: &Vec6) -> String {
    v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",")
}

pub fn write_csv<W: Write>(rows: &[ScoreRow], mut w: W) -> io::Result<()> {
    writeln!(w, "{HEADER}")?;
    for r in rows {
        let p = r.point;
        match &r.scored {
            Some(s) => writeln!(
                w,
                "{},{},{},{},{:e},{},{},{}",
                p.x,
                p.y,
                p.z,
                s.kind.as_str(),
                s.phi,
                join(s.sensitivity.values()),
                join(&s.score),
                u8::from(r.selected)
            )?,
            None => writeln!(w, "{},{},{},none,,,,,,,,,,,,,,0", p.x, p.y, p.z)?,
        }
    }
    Ok(())
}
