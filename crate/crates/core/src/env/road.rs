use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use super::paths::Digraph;
use crate::rng::RandomSource;
use crate::tree::{FeatureSchema, FeatureVector};
use crate::{Error, Result};

/// Number of variables in an edge context.
pub const EDGE_CONTEXT_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Rush-hour bump of the congestion multiplier, in hours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub center: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    /// Metres per second.
    pub speed_limit: f64,
    pub stop: bool,
    /// Metres.
    pub length: f64,
    /// Log-scale SD of the multiplicative noise.
    pub sigma: f64,
    /// Mean of the exponential stop delay, seconds; used only when `stop`.
    pub stop_mean: f64,
    /// Congestion amplitude per network peak.
    pub amplitudes: Vec<f64>,
}

impl Edge {
    pub fn base_time(&self) -> f64 {
        self.length / self.speed_limit
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadNetwork {
    pub peaks: Vec<Peak>,
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
}

impl RoadNetwork {
    pub fn new(peaks: Vec<Peak>, vertices: Vec<Vertex>, edges: Vec<Edge>) -> Result<Self> {
        let net = Self {
            peaks,
            vertices,
            edges,
        };
        net.validate()?;
        Ok(net)
    }

    fn validate(&self) -> Result<()> {
        for (i, v) in self.vertices.iter().enumerate() {
            if v.id != i {
                return Err(Error::InvalidArgument(format!("vertex {} listed at position {i}", v.id)));
            }
            if !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()) {
                return Err(Error::NonFinite(format!("vertex {i} coordinates")));
            }
        }
        for p in &self.peaks {
            if !(p.center.is_finite() && p.width > 0.0 && p.width.is_finite()) {
                return Err(Error::InvalidArgument(format!("peak {p:?} needs a finite centre and width > 0")));
            }
        }
        let nv = self.vertices.len();
        for (i, e) in self.edges.iter().enumerate() {
            let bad = |m: &str| Err(Error::InvalidArgument(format!("edge {i}: {m}")));
            if e.id != i {
                return bad(&format!("listed with id {}", e.id));
            }
            if e.from >= nv || e.to >= nv || e.from == e.to {
                return bad("endpoints must be two distinct known vertices");
            }
            if !(e.speed_limit > 0.0 && e.speed_limit.is_finite()) {
                return bad("speed_limit must be > 0");
            }
            if !(e.length > 0.0 && e.length.is_finite()) {
                return bad("length must be > 0");
            }
            if !(e.sigma >= 0.0 && e.sigma.is_finite()) || !(e.stop_mean >= 0.0 && e.stop_mean.is_finite()) {
                return bad("sigma and stop_mean must be finite and >= 0");
            }
            if e.amplitudes.len() != self.peaks.len() || e.amplitudes.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
                return bad("needs one non-negative amplitude per peak");
            }
        }
        Ok(())
    }

    pub fn graph(&self) -> Digraph {
        Digraph::new(
            self.vertices.len(),
            self.edges.iter().map(|e| (e.from, e.to)).collect(),
        )
    }

    /// `1 + Σ_j a_j exp(-(h - c_j)² / 2w_j²)`, with distance on the 24 h circle.
    pub fn congestion(&self, edge: usize, time_of_day: f64) -> f64 {
        let e = &self.edges[edge];
        let mut m = 1.0;
        for (p, a) in self.peaks.iter().zip(&e.amplitudes) {
            let mut d = (time_of_day - p.center).rem_euclid(24.0);
            if d > 12.0 {
                d = 24.0 - d;
            }
            m += a * (-d * d / (2.0 * p.width * p.width)).exp();
        }
        m
    }

    /// Closed-form mean travel time in seconds.
    pub fn expected_time(&self, edge: usize, time_of_day: f64) -> f64 {
        let e = &self.edges[edge];
        let stop = if e.stop { e.stop_mean } else { 0.0 };
        e.base_time() * self.congestion(edge, time_of_day) + stop
    }

    pub fn expected_times(&self, time_of_day: f64) -> Vec<f64> {
        (0..self.edges.len())
            .map(|e| self.expected_time(e, time_of_day))
            .collect()
    }

    /// One travel-time draw: `base · m(h) · exp(σZ − σ²/2)` plus an
    /// exponential stop delay when the edge has a stop.
    pub fn sample_travel_time(&self, edge: usize, time_of_day: f64, rng: &mut RandomSource) -> f64 {
        let e = &self.edges[edge];
        let mut t = e.base_time() * self.congestion(edge, time_of_day);
        if e.sigma > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            t *= (e.sigma * z - 0.5 * e.sigma * e.sigma).exp();
        }
        if e.stop && e.stop_mean > 0.0 {
            t += Exp::new(1.0 / e.stop_mean).expect("positive rate").sample(rng);
        }
        t
    }

    pub fn context_schema() -> FeatureSchema {
        FeatureSchema::numeric(EDGE_CONTEXT_LEN).expect("non-empty schema")
    }

    /// The twelve edge variables: start x/y/z, end x/y/z, per-axis distances,
    /// speed limit, stop flag and time of day.
    pub fn edge_context(&self, edge: usize, time_of_day: f64, schema: &FeatureSchema) -> FeatureVector {
        let e = &self.edges[edge];
        let (a, b) = (self.vertices[e.from], self.vertices[e.to]);
        let values = vec![
            a.x,
            a.y,
            a.z,
            b.x,
            b.y,
            b.z,
            (b.x - a.x).abs(),
            (b.y - a.y).abs(),
            (b.z - a.z).abs(),
            e.speed_limit,
            if e.stop { 1.0 } else { 0.0 },
            time_of_day,
        ];
        FeatureVector {
            numeric_values: values,
            categorical_values: vec![],
            schema_id: schema.id(),
        }
    }

    /// Line-oriented text form; see [`RoadNetwork::from_text`].
    pub fn to_text(&self) -> String {
        let mut s = String::from("# road network v1\n");
        for p in &self.peaks {
            writeln!(s, "peak {:?} {:?}", p.center, p.width).unwrap();
        }
        for v in &self.vertices {
            writeln!(s, "vertex {} {:?} {:?} {:?}", v.id, v.x, v.y, v.z).unwrap();
        }
        for e in &self.edges {
            write!(
                s,
                "edge {} {} {} {:?} {} {:?} {:?} {:?}",
                e.id,
                e.from,
                e.to,
                e.speed_limit,
                u8::from(e.stop),
                e.length,
                e.sigma,
                e.stop_mean
            )
            .unwrap();
            for a in &e.amplitudes {
                write!(s, " {a:?}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    /// Parses records of the form
    ///
    /// ```text
    /// peak <center_h> <width_h>
    /// vertex <id> <x> <y> <z>
    /// edge <id> <from> <to> <speed_limit> <stop 0|1> <length> <sigma> <stop_mean> <amplitude per peak>...
    /// ```
    ///
    /// Blank lines and `#` comments are ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut peaks = Vec::new();
        let mut vertices = Vec::new();
        let mut edges = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = format!("line {}", i + 1);
            let fields: Vec<&str> = line.split_whitespace().collect();
            let num = |j: usize| -> Result<f64> {
                let f = fields
                    .get(j)
                    .ok_or_else(|| Error::parse(&at, format!("missing field {j}")))?;
                f.parse::<f64>()
                    .map_err(|e| Error::parse(&at, format!("field {j} {f:?}: {e}")))
            };
            let int = |j: usize| -> Result<usize> {
                let f = fields
                    .get(j)
                    .ok_or_else(|| Error::parse(&at, format!("missing field {j}")))?;
                f.parse::<usize>()
                    .map_err(|e| Error::parse(&at, format!("field {j} {f:?}: {e}")))
            };
            match fields[0] {
                "peak" if fields.len() == 3 => peaks.push(Peak {
                    center: num(1)?,
                    width: num(2)?,
                }),
                "vertex" if fields.len() == 5 => vertices.push(Vertex {
                    id: int(1)?,
                    x: num(2)?,
                    y: num(3)?,
                    z: num(4)?,
                }),
                "edge" if fields.len() >= 9 => edges.push(Edge {
                    id: int(1)?,
                    from: int(2)?,
                    to: int(3)?,
                    speed_limit: num(4)?,
                    stop: match fields[5] {
                        "0" => false,
                        "1" => true,
                        other => return Err(Error::parse(&at, format!("stop flag {other:?} is not 0 or 1"))),
                    },
                    length: num(6)?,
                    sigma: num(7)?,
                    stop_mean: num(8)?,
                    amplitudes: (9..fields.len()).map(num).collect::<Result<_>>()?,
                }),
                kind => {
                    return Err(Error::parse(
                        &at,
                        format!("unrecognised record {kind:?} with {} fields", fields.len()),
                    ))
                }
            }
        }
        Self::new(peaks, vertices, edges).map_err(|e| Error::parse("road network", e.to_string()))
    }
}

/// Parameters of the synthetic grid generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    /// Mean block length in metres.
    pub spacing: f64,
    /// Every `highway_every`-th row and column is a highway.
    pub highway_every: usize,
    /// Every `arterial_every`-th row and column (not a highway) is an arterial.
    pub arterial_every: usize,
    /// Share of residential edges with no traffic model: their time is
    /// exactly length / speed limit.
    pub unrecorded_share: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            rows: 9,
            cols: 9,
            spacing: 300.0,
            highway_every: 4,
            arterial_every: 2,
            unrecorded_share: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RoadClass {
    Highway,
    Arterial,
    Residential,
}

/// Builds a jittered grid with two-way streets in three road classes.
/// Highways are fast but congest heavily at the morning and evening peaks,
/// so the best route depends on the time of day.
pub fn generate_grid(spec: &GridSpec, rng: &mut RandomSource) -> Result<RoadNetwork> {
    if spec.rows < 2 || spec.cols < 2 || spec.spacing.is_nan() || spec.spacing <= 0.0 {
        return Err(Error::InvalidArgument("grid needs at least 2x2 vertices and spacing > 0".into()));
    }
    let peaks = vec![
        Peak {
            center: 8.0,
            width: 1.5,
        },
        Peak {
            center: 17.5,
            width: 2.0,
        },
    ];
    let mut vertices = Vec::with_capacity(spec.rows * spec.cols);
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let jitter = 0.15 * spec.spacing;
            let x = c as f64 * spec.spacing + rng.random_range(-jitter..jitter);
            let y = r as f64 * spec.spacing + rng.random_range(-jitter..jitter);
            let z = 20.0 * ((x / 700.0).sin() + (y / 900.0).cos()) + rng.random_range(-2.0..2.0);
            vertices.push(Vertex {
                id: vertices.len(),
                x,
                y,
                z,
            });
        }
    }
    let class_of = |line: usize| {
        if spec.highway_every > 0 && line % spec.highway_every == 0 {
            RoadClass::Highway
        } else if spec.arterial_every > 0 && line % spec.arterial_every == 0 {
            RoadClass::Arterial
        } else {
            RoadClass::Residential
        }
    };
    let mut edges = Vec::new();
    let link = |a: usize, b: usize, class: RoadClass, rng: &mut RandomSource, edges: &mut Vec<Edge>| {
        let (va, vb): (Vertex, Vertex) = (vertices[a], vertices[b]);
        let straight = ((va.x - vb.x).powi(2) + (va.y - vb.y).powi(2) + (va.z - vb.z).powi(2)).sqrt();
        let length = straight * rng.random_range(1.0..1.15);
        let (speed, stop_p, stop_mean, sigma, am, pm) = match class {
            RoadClass::Highway => (25.0, 0.05, 20.0, 0.15, 2.2, 1.8),
            RoadClass::Arterial => (15.0, 0.35, 15.0, 0.25, 0.9, 0.8),
            RoadClass::Residential => (9.0, 0.5, 8.0, 0.3, 0.25, 0.2),
        };
        for (from, to) in [(a, b), (b, a)] {
            let unrecorded = class == RoadClass::Residential && rng.random::<f64>() < spec.unrecorded_share;
            let stop = rng.random::<f64>() < stop_p;
            let scale = rng.random_range(0.7..1.3);
            edges.push(Edge {
                id: edges.len(),
                from,
                to,
                speed_limit: speed,
                stop,
                length,
                sigma: if unrecorded { 0.0 } else { sigma },
                stop_mean: if unrecorded { 0.0 } else { stop_mean * scale },
                amplitudes: if unrecorded {
                    vec![0.0, 0.0]
                } else {
                    vec![am * scale, pm * rng.random_range(0.7..1.3)]
                },
            });
        }
    };
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let v = r * spec.cols + c;
            if c + 1 < spec.cols {
                link(v, v + 1, class_of(r), rng, &mut edges);
            }
            if r + 1 < spec.rows {
                link(v, v + spec.cols, class_of(c), rng, &mut edges);
            }
        }
    }
    RoadNetwork::new(peaks, vertices, edges)
}
