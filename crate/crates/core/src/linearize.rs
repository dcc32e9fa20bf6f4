//! Linear and piece-linear surrogates of pipes, pump heads and pump power.
//!
//! Every pump is linearized individually (n = 1); pumps of one group share the
//! same surrogate.

use serde::{Deserialize, Serialize};

use crate::hydraulics::{intercept_flow, SimulationResult};
use crate::network::{Network, PumpModel};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinearizeError {
    #[error("invalid breakpoints: {0}")]
    InvalidBreakpoints(String),
    #[error("degenerate pump geometry: {0}")]
    DegenerateGeometry(String),
    #[error("invalid linearization point: {0}")]
    InvalidPoint(String),
    #[error("operating points do not match the network: {0}")]
    Mismatch(String),
}

/// Tangent plane `P ≈ m_q q + m_s s + c` of the single-pump power surface.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerTangent {
    pub m_q: f64,
    pub m_s: f64,
    pub c: f64,
    pub q0: f64,
    pub s0: f64,
}

impl PowerTangent {
    pub fn eval(&self, q: f64, s: f64) -> f64 {
        self.m_q * q + self.m_s * s + self.c
    }
}

pub fn linearize_power(model: &PumpModel, q0: f64, s0: f64) -> Result<PowerTangent, LinearizeError> {
    if !(q0 > 0.0) || s0 < model.s_min || s0 > model.s_max {
        return Err(LinearizeError::InvalidPoint(format!(
            "(q0, s0) = ({q0}, {s0}) needs q0 > 0 and s0 in [{}, {}]",
            model.s_min, model.s_max
        )));
    }
    let a = &model.power;
    let m_q = 3.0 * a.a3 * q0 * q0 + 2.0 * a.a2 * s0 * q0 + a.a1 * s0 * s0;
    let m_s = a.a2 * q0 * q0 + 2.0 * a.a1 * q0 * s0 + 3.0 * a.a0 * s0 * s0;
    // The power surface is homogeneous of degree three, so the constant of
    // the tangent collapses to -2 P0.
    let c = -2.0 * model.unit_power(q0, s0);
    Ok(PowerTangent { m_q, m_s, c, q0, s0 })
}

/// Three-segment odd-symmetric chord approximation of `R |q| q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipePwl {
    pub resistance: f64,
    /// `[-q2, -q1, q1, q2]`.
    pub breakpoints: [f64; 4],
    pub slopes: [f64; 3],
    pub intercepts: [f64; 3],
}

impl PipePwl {
    pub const SEGMENTS: usize = 3;

    /// Flow interval `[lo, hi]` of segment `i`.
    pub fn segment_range(&self, i: usize) -> (f64, f64) {
        let b = &self.breakpoints;
        match i {
            0 => (b[0], b[1]),
            1 => (b[1], b[2]),
            2 => (b[2], b[3]),
            _ => panic!("pipe segment {i} out of range"),
        }
    }

    pub fn segment_value(&self, i: usize, q: f64) -> f64 {
        self.slopes[i] * q + self.intercepts[i]
    }

    /// Segment containing `q`; breakpoints belong to the inner segment and
    /// flows beyond `±q2` to the outer ones.
    pub fn segment_of(&self, q: f64) -> usize {
        if q < self.breakpoints[1] {
            0
        } else if q <= self.breakpoints[2] {
            1
        } else {
            2
        }
    }

    pub fn eval(&self, q: f64) -> f64 {
        self.segment_value(self.segment_of(q), q)
    }

    pub fn q1(&self) -> f64 {
        self.breakpoints[2]
    }

    pub fn q2(&self) -> f64 {
        self.breakpoints[3]
    }

    /// Largest `|R|q|q - pwl(q)|` over a uniform grid of `n` points on `[-q2, q2]`.
    pub fn max_error_on_grid(&self, n: usize) -> f64 {
        let q2 = self.q2();
        (0..n)
            .map(|i| {
                let q = -q2 + 2.0 * q2 * i as f64 / (n - 1).max(1) as f64;
                (self.resistance * q.abs() * q - self.eval(q)).abs()
            })
            .fold(0.0, f64::max)
    }
}

pub fn linearize_pipe(resistance: f64, q1: f64, q2: f64) -> Result<PipePwl, LinearizeError> {
    if !(resistance > 0.0) {
        return Err(LinearizeError::InvalidBreakpoints(format!("resistance {resistance} must be positive")));
    }
    if !(q1 > 0.0 && q2 > q1 && q2.is_finite()) {
        return Err(LinearizeError::InvalidBreakpoints(format!("need 0 < q1 < q2, got q1={q1}, q2={q2}")));
    }
    let h1 = resistance * q1 * q1;
    let h2 = resistance * q2 * q2;
    let m_out = (h2 - h1) / (q2 - q1);
    let c_out = (h1 * q2 - h2 * q1) / (q2 - q1);
    let m_mid = h1 / q1;
    Ok(PipePwl {
        resistance,
        breakpoints: [-q2, -q1, q1, q2],
        slopes: [m_out, m_mid, m_out],
        intercepts: [-c_out, 0.0, c_out],
    })
}

/// A point of the pump surface in `(s, q, H)` coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub s: f64,
    pub q: f64,
    pub h: f64,
}

/// Plane `H = dd s + ee q + ff`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub dd: f64,
    pub ee: f64,
    pub ff: f64,
}

impl Plane {
    pub fn eval(&self, q: f64, s: f64) -> f64 {
        self.dd * s + self.ee * q + self.ff
    }
}

/// Half-plane `m_qq q + m_ss s + c <= 0`, normalized to a unit normal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfPlane {
    pub m_qq: f64,
    pub m_ss: f64,
    pub c: f64,
}

impl HalfPlane {
    pub fn eval(&self, q: f64, s: f64) -> f64 {
        self.m_qq * q + self.m_ss * s + self.c
    }
}

/// Four-plane fan approximation of the single-pump head surface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PumpPwl {
    /// `p1, p2, p3, p4, pn`.
    pub vertices: [Vertex; 5],
    pub planes: [Plane; 4],
    pub domains: [[HalfPlane; 3]; 4],
    pub s_min: f64,
    pub s_max: f64,
    /// Intercept flow at `s_max`, the upper bound of pump flow.
    pub q_max: f64,
}

impl PumpPwl {
    pub const DOMAINS: usize = 4;

    /// Vertex indices (into `vertices`) of triangle `i`.
    pub fn triangle(i: usize) -> [usize; 3] {
        [4, i, (i + 1) % 4]
    }

    /// Largest half-plane value of domain `i` at `(q, s)`; `<= 0` means inside.
    pub fn domain_excess(&self, i: usize, q: f64, s: f64) -> f64 {
        self.domains[i].iter().map(|r| r.eval(q, s)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Domains whose three rows hold at `(q, s)` within `tol`.
    pub fn domains_containing(&self, q: f64, s: f64, tol: f64) -> Vec<usize> {
        (0..4).filter(|&i| self.domain_excess(i, q, s) <= tol).collect()
    }

    /// Domain with the smallest excess; ties go to the lowest index.
    pub fn best_domain(&self, q: f64, s: f64) -> usize {
        let mut best = 0;
        for i in 1..4 {
            if self.domain_excess(i, q, s) < self.domain_excess(best, q, s) {
                best = i;
            }
        }
        best
    }

    pub fn eval(&self, q: f64, s: f64) -> f64 {
        self.planes[self.best_domain(q, s)].eval(q, s)
    }

    /// Whether `(q, s)` lies in the projected quadrilateral within `tol`.
    pub fn in_quadrilateral(&self, q: f64, s: f64, tol: f64) -> bool {
        s >= self.s_min - tol && s <= self.s_max + tol && q >= -tol && q <= self.intercept_edge(s) + tol
    }

    /// Largest `|plane - H(q, 1, s)|` over a uniform grid of the quadrilateral.
    pub fn max_error_on_grid(&self, model: &PumpModel, n: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let s = self.s_min + (self.s_max - self.s_min) * i as f64 / (n - 1) as f64;
            let q_edge = self.intercept_edge(s);
            for j in 0..n {
                let q = q_edge * j as f64 / (n - 1) as f64;
                worst = worst.max((self.eval(q, s) - model.group_head(q, 1.0, s)).abs());
            }
        }
        worst
    }

    /// Flow on the intercept edge p4 -> p3 at speed `s`.
    pub fn intercept_edge(&self, s: f64) -> f64 {
        let (p3, p4) = (self.vertices[2], self.vertices[3]);
        p4.q + (s - p4.s) / (p3.s - p4.s) * (p3.q - p4.q)
    }
}

pub fn build_pump_pwl(model: &PumpModel) -> Result<PumpPwl, LinearizeError> {
    let geometry = |e| LinearizeError::DegenerateGeometry(format!("{e}"));
    let q_int_min = intercept_flow(model, 1, model.s_min).map_err(geometry)?;
    let q_int_max = intercept_flow(model, 1, model.s_max).map_err(geometry)?;
    let h = |q: f64, s: f64| model.group_head(q, 1.0, s);
    let vertices = [
        Vertex { s: model.s_min, q: 0.0, h: h(0.0, model.s_min) },
        Vertex { s: model.s_max, q: 0.0, h: h(0.0, model.s_max) },
        Vertex { s: model.s_max, q: q_int_max, h: 0.0 },
        Vertex { s: model.s_min, q: q_int_min, h: 0.0 },
        Vertex { s: model.s_nominal, q: model.q_nominal, h: h(model.q_nominal, model.s_nominal) },
    ];
    pump_pwl_from_vertices(vertices)
}

/// Fan triangulation around `vertices[4]` with planes through the given
/// vertex heights. `vertices[0..4]` must be the corners p1..p4 in order.
pub fn pump_pwl_from_vertices(vertices: [Vertex; 5]) -> Result<PumpPwl, LinearizeError> {
    let pn = vertices[4];
    let mut planes = [Plane { dd: 0.0, ee: 0.0, ff: 0.0 }; 4];
    let mut domains = [[HalfPlane { m_qq: 0.0, m_ss: 0.0, c: 0.0 }; 3]; 4];
    for i in 0..4 {
        let (pa, pb) = (vertices[i], vertices[(i + 1) % 4]);
        let l1 = [pn.s - pa.s, pn.q - pa.q, pn.h - pa.h];
        let l2 = [pn.s - pb.s, pn.q - pb.q, pn.h - pb.h];
        let normal = [
            l1[1] * l2[2] - l1[2] * l2[1],
            l1[2] * l2[0] - l1[0] * l2[2],
            l1[0] * l2[1] - l1[1] * l2[0],
        ];
        // The H component is the signed doubled area of the projected triangle.
        let scale = (l1[0].hypot(l1[1])) * (l2[0].hypot(l2[1]));
        if !(normal[2].abs() > 1e-12 * scale.max(f64::MIN_POSITIVE)) {
            return Err(LinearizeError::DegenerateGeometry(format!(
                "projected triangle {} is collinear",
                i + 1
            )));
        }
        let dd = -normal[0] / normal[2];
        let ee = -normal[1] / normal[2];
        let ff = pn.h + (normal[0] * pn.s + normal[1] * pn.q) / normal[2];
        planes[i] = Plane { dd, ee, ff };

        let corners = [pn, pa, pb];
        for e in 0..3 {
            let (u, v, w) = (corners[e], corners[(e + 1) % 3], corners[(e + 2) % 3]);
            // Line through u, v in (q, s): n·(x - u) = 0 with n ⟂ (v - u).
            let (dq, ds) = (v.q - u.q, v.s - u.s);
            let len = dq.hypot(ds);
            let (mut m_qq, mut m_ss) = (ds / len, -dq / len);
            let mut c = -(m_qq * u.q + m_ss * u.s);
            if m_qq * w.q + m_ss * w.s + c > 0.0 {
                m_qq = -m_qq;
                m_ss = -m_ss;
                c = -c;
            }
            domains[i][e] = HalfPlane { m_qq, m_ss, c };
        }
    }
    let s_min = vertices[0].s.min(vertices[3].s);
    let s_max = vertices[1].s.max(vertices[2].s);
    let inside = (0..4).all(|i| {
        let (a, b) = (vertices[i], vertices[(i + 1) % 4]);
        let cross = (b.q - a.q) * (pn.s - a.s) - (b.s - a.s) * (pn.q - a.q);
        cross.abs() > 1e-12
    });
    let pwl = PumpPwl { vertices, planes, domains, s_min, s_max, q_max: vertices[2].q };
    if !inside || pwl.domain_excess(0, pn.q, pn.s) > 1e-9 {
        return Err(LinearizeError::DegenerateGeometry(
            "nominal point must lie strictly inside the operating quadrilateral".into(),
        ));
    }
    // The fan is a partition only if every triangle is oriented the same way.
    let orient = |i: usize| {
        let [a, b, c] = PumpPwl::triangle(i).map(|v| vertices[v]);
        ((b.q - a.q) * (c.s - a.s) - (b.s - a.s) * (c.q - a.q)).signum()
    };
    if (1..4).any(|i| orient(i) != orient(0)) {
        return Err(LinearizeError::DegenerateGeometry(
            "nominal point is not inside the operating quadrilateral".into(),
        ));
    }
    Ok(pwl)
}

/// How the inner breakpoint of a pipe was chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakpointSource {
    ReferenceStep,
    TimeMean,
    Floor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipePoint {
    pub q1: f64,
    pub dh1: f64,
    pub q2: f64,
    pub source: BreakpointSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub reference_step: usize,
    pub pipes: Vec<PipePoint>,
    /// Power linearization point `(q0, s0)` per pump group.
    pub pumps: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearizeConfig {
    /// Clock hour whose simulated state provides the pipe breakpoints.
    pub reference_hour: f64,
    /// Outer breakpoint margin, `q2 = beta q1`.
    pub beta: f64,
    /// Inner breakpoint used when a pipe carries no flow at all.
    pub eps_bp: f64,
    /// Lower limit on the outer breakpoint so the surrogate covers every
    /// flow the optimizer may route through a pipe.
    pub min_outer_breakpoint: f64,
    /// Overrides the nominal power linearization point when set.
    pub power_point: Option<(f64, f64)>,
}

impl Default for LinearizeConfig {
    fn default() -> Self {
        LinearizeConfig {
            reference_hour: 12.0,
            beta: 2.0,
            eps_bp: 1.0,
            min_outer_breakpoint: 0.0,
            power_point: None,
        }
    }
}

/// Index of the step that starts at `reference_hour`, clamped to the horizon.
pub fn reference_step(hour: f64, dt_hours: f64, horizon: usize) -> usize {
    ((hour / dt_hours).round().max(0.0) as usize).min(horizon.saturating_sub(1))
}

pub fn select_operating_points(
    network: &Network,
    sim: &SimulationResult,
    config: &LinearizeConfig,
) -> Result<OperatingPoint, LinearizeError> {
    if sim.horizon() != network.horizon() {
        return Err(LinearizeError::Mismatch(format!(
            "simulation covers {} steps, horizon is {}",
            sim.horizon(),
            network.horizon()
        )));
    }
    if !(config.beta > 1.0) || !(config.eps_bp > 0.0) {
        return Err(LinearizeError::InvalidBreakpoints("need beta > 1 and eps_bp > 0".into()));
    }
    let k_ref = reference_step(config.reference_hour, network.dt_hours(), network.horizon());
    let pipes = network
        .pipes()
        .iter()
        .enumerate()
        .map(|(p, pipe)| {
            let series = &sim.flows[network.pipe_element(p)];
            let (q1, source) = if series[k_ref].abs() > 0.0 {
                (series[k_ref].abs(), BreakpointSource::ReferenceStep)
            } else {
                let mean = series.iter().map(|q| q.abs()).sum::<f64>() / series.len() as f64;
                if mean > 0.0 {
                    (mean, BreakpointSource::TimeMean)
                } else {
                    (config.eps_bp, BreakpointSource::Floor)
                }
            };
            let q2 = (config.beta * q1).max(config.min_outer_breakpoint);
            PipePoint { q1, dh1: pipe.resistance * q1 * q1, q2, source }
        })
        .collect();
    let pumps = network
        .pump_groups()
        .iter()
        .map(|g| config.power_point.unwrap_or((g.model.q_nominal, g.model.s_nominal)))
        .collect();
    Ok(OperatingPoint { reference_step: k_ref, pipes, pumps })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PumpSurrogate {
    pub group: String,
    pub tangent: PowerTangent,
    pub pwl: PumpPwl,
}

/// All surrogates needed by the MILP builder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearizedModel {
    pub pipes: Vec<PipePwl>,
    /// One entry per pump group.
    pub pumps: Vec<PumpSurrogate>,
    pub operating_point: OperatingPoint,
}

impl LinearizedModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("linearized model serializes")
    }
}

pub fn linearize(network: &Network, op: &OperatingPoint) -> Result<LinearizedModel, LinearizeError> {
    if op.pipes.len() != network.pipes().len() || op.pumps.len() != network.pump_groups().len() {
        return Err(LinearizeError::Mismatch("element counts differ".into()));
    }
    let pipes = network
        .pipes()
        .iter()
        .zip(&op.pipes)
        .map(|(pipe, pt)| linearize_pipe(pipe.resistance, pt.q1, pt.q2))
        .collect::<Result<_, _>>()?;
    let pumps = network
        .pump_groups()
        .iter()
        .zip(&op.pumps)
        .map(|(g, &(q0, s0))| {
            Ok(PumpSurrogate {
                group: g.id.clone(),
                tangent: linearize_power(&g.model, q0, s0)?,
                pwl: build_pump_pwl(&g.model)?,
            })
        })
        .collect::<Result<_, LinearizeError>>()?;
    Ok(LinearizedModel { pipes, pumps, operating_point: op.clone() })
}
