//! Triangulations of the unit disc.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// Boundary vertices in counterclockwise order.
    pub boundary: Vec<usize>,
}

pub const DEFAULT_RINGS: usize = 96;
pub const DEFAULT_BOUNDARY_NODES: usize = 512;

impl Mesh {
    /// Concentric-ring mesh: ring `j` has radius `j / rings` and
    /// `round(boundary_nodes * j / rings)` equispaced vertices starting at
    /// angle 0. Neighbouring rings are stitched by walking both in angle.
    pub fn disc(rings: usize, boundary_nodes: usize) -> Result<Self> {
        if rings < 1 || boundary_nodes < 3 {
            return Err(Error::InvalidMesh("need at least one ring and three boundary nodes".into()));
        }
        let mut vertices = vec![[0.0, 0.0]];
        let mut ring_start = vec![0usize];
        let mut ring_len = vec![1usize];
        for j in 1..=rings {
            let m = ((boundary_nodes as f64 * j as f64 / rings as f64).round() as usize).max(3);
            let m = if j == rings { boundary_nodes } else { m };
            let r = j as f64 / rings as f64;
            ring_start.push(vertices.len());
            ring_len.push(m);
            for i in 0..m {
                let t = 2.0 * PI * i as f64 / m as f64;
                vertices.push(if j == rings { [t.cos(), t.sin()] } else { [r * t.cos(), r * t.sin()] });
            }
        }
        let mut triangles = Vec::new();
        for i in 0..ring_len[1] {
            triangles.push([0, ring_start[1] + i, ring_start[1] + (i + 1) % ring_len[1]]);
        }
        for j in 2..=rings {
            let (sa, ma) = (ring_start[j - 1], ring_len[j - 1]);
            let (sb, mb) = (ring_start[j], ring_len[j]);
            let (mut a, mut b) = (0usize, 0usize);
            while a < ma || b < mb {
                let next_a = (a + 1) as f64 / ma as f64;
                let next_b = (b + 1) as f64 / mb as f64;
                if b == mb || (a < ma && next_a <= next_b) {
                    triangles.push([sa + a % ma, sa + (a + 1) % ma, sb + b % mb]);
                    a += 1;
                } else {
                    triangles.push([sa + a % ma, sb + (b + 1) % mb, sb + b % mb]);
                    b += 1;
                }
            }
        }
        let boundary = (0..boundary_nodes).map(|i| ring_start[rings] + i).collect();
        let mut mesh = Self { vertices, triangles, boundary };
        mesh.orient();
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn default_disc() -> Self {
        Self::disc(DEFAULT_RINGS, DEFAULT_BOUNDARY_NODES).expect("default mesh is valid")
    }

    fn orient(&mut self) {
        for t in 0..self.triangles.len() {
            if self.signed_area(t) < 0.0 {
                self.triangles[t].swap(1, 2);
            }
        }
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (p, q, r) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
    }

    pub fn validate(&self) -> Result<()> {
        let nv = self.vertices.len();
        if self.triangles.is_empty() || self.boundary.len() < 3 {
            return Err(Error::InvalidMesh("mesh is empty".into()));
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            if self.signed_area(t) <= 0.0 {
                return Err(Error::InvalidMesh(format!("triangle {t} is degenerate or clockwise")));
            }
        }
        for &b in &self.boundary {
            let v = self.vertices.get(b).ok_or_else(|| Error::InvalidMesh("boundary index out of range".into()))?;
            if (v[0].hypot(v[1]) - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidMesh(format!("boundary vertex {b} is off the unit circle")));
            }
        }
        let angles: Vec<f64> = self.boundary.iter().map(|&b| self.vertices[b][1].atan2(self.vertices[b][0])).collect();
        let turn: f64 = (0..angles.len()).map(|i| (angles[(i + 1) % angles.len()] - angles[i]).rem_euclid(2.0 * PI)).sum();
        if (turn - 2.0 * PI).abs() > 1e-6 {
            return Err(Error::InvalidMesh("boundary is not a single counterclockwise loop".into()));
        }
        let area: f64 = (0..self.triangles.len()).map(|t| self.signed_area(t)).sum();
        let poly = 0.5
            * self
                .boundary_edges()
                .map(|(a, b)| {
                    let (p, q) = (self.vertices[a], self.vertices[b]);
                    p[0] * q[1] - q[0] * p[1]
                })
                .sum::<f64>();
        if (area - poly).abs() > 1e-9 * poly {
            return Err(Error::InvalidMesh(format!("triangles cover area {area}, boundary encloses {poly}")));
        }
        Ok(())
    }

    /// Consecutive boundary vertex pairs, counterclockwise.
    pub fn boundary_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.boundary.len();
        (0..n).map(move |i| (self.boundary[i], self.boundary[(i + 1) % n]))
    }

    pub fn boundary_angles(&self) -> Vec<f64> {
        self.boundary.iter().map(|&b| self.vertices[b][1].atan2(self.vertices[b][0]).rem_euclid(2.0 * PI)).collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut m: Self = serde_json::from_str(text)?;
        m.orient();
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("mesh serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_mesh_shape() {
        let m = Mesh::default_disc();
        assert!((45_000..55_000).contains(&m.triangles.len()), "{}", m.triangles.len());
        assert_eq!(m.boundary.len(), 512);
        let area: f64 = (0..m.triangles.len()).map(|t| m.signed_area(t)).sum();
        assert!((area - PI).abs() < 1e-3);
    }

    #[test]
    fn half_radius_is_a_ring() {
        let m = Mesh::disc(8, 32).unwrap();
        // Every triangle lies on one side of r = 0.5.
        for tri in &m.triangles {
            let r: Vec<f64> = tri.iter().map(|&v| m.vertices[v][0].hypot(m.vertices[v][1])).collect();
            let inside = r.iter().all(|&x| x <= 0.5 + 1e-12);
            let outside = r.iter().all(|&x| x >= 0.5 - 1e-12);
            assert!(inside || outside);
        }
    }

    #[test]
    fn json_round_trip_and_rejects_bad() {
        let m = Mesh::disc(3, 12).unwrap();
        assert_eq!(Mesh::from_json(&m.to_json()).unwrap(), m);
        let mut bad = m.clone();
        bad.vertices[bad.boundary[0]] = [0.9, 0.0];
        assert!(bad.validate().is_err());
        let mut hole = m.clone();
        hole.triangles.pop();
        assert!(hole.validate().is_err());
    }
}
