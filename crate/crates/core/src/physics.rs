//! Pointwise kernels of the coupled Frank-Oseen model.
//!
//! Fields live on a planar domain but the director has three components, so
//! every differential operator is taken with `d/dz = 0`: `curl n` is a full
//! 3-vector and `grad phi` is embedded as `(phi_x, phi_y, 0)`.
//!
//! Three views of the same free energy are provided:
//! - [`energy_density`]: the integrand of the model energy plus the constraint term;
//! - [`energy_jet`]: its exact gradient and Hessian with respect to the local
//!   jet `(n, grad n, grad phi, lambda)`, used by assembly;
//! - [`strong_residuals`] / [`side_flux`]: the element-interior and edge terms
//!   obtained by integrating the first variation by parts, used by the estimator.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Formulation {
    Penalty,
    Lagrangian,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaterialParams {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub eps0: f64,
    pub eps_perp: f64,
    /// Dielectric anisotropy `eps_par - eps_perp`.
    pub eps_a: f64,
    pub e_s: f64,
    pub e_b: f64,
    pub zeta: f64,
    pub electric: bool,
    pub formulation: Formulation,
}

impl MaterialParams {
    /// Equal Frank constants, no electric field.
    pub fn elastic(formulation: Formulation, zeta: f64) -> Self {
        Self {
            k1: 1.0,
            k2: 1.0,
            k3: 1.0,
            eps0: 0.0,
            eps_perp: 0.0,
            eps_a: 0.0,
            e_s: 0.0,
            e_b: 0.0,
            zeta,
            electric: false,
            formulation,
        }
    }

    /// Non-dimensionalized 5CB with flexoelectric coupling.
    pub fn flexo_5cb(formulation: Formulation, zeta: f64) -> Self {
        Self {
            k1: 1.0,
            k2: 0.62903,
            k3: 1.32258,
            eps0: 1.42809,
            eps_perp: 7.0,
            eps_a: 11.5,
            e_s: 1.5,
            e_b: -1.5,
            zeta,
            electric: true,
            formulation,
        }
    }

    pub fn kappa(&self) -> f64 {
        self.k2 / self.k3
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.k1 > 0.0 && self.k2 > 0.0 && self.k3 > 0.0) {
            return Err("Frank constants must be positive".into());
        }
        if self.formulation == Formulation::Penalty && self.zeta <= 0.0 {
            return Err("penalty formulation requires zeta > 0".into());
        }
        if self.zeta < 0.0 {
            return Err("zeta must be non-negative".into());
        }
        Ok(())
    }

    fn penalty(&self) -> f64 {
        match self.formulation {
            Formulation::Penalty => self.zeta,
            Formulation::Lagrangian => 0.0,
        }
    }

    /// `(eps0*eps_perp, eps0*eps_a, e_s, e_b)`, all zero when the field is off.
    fn electric_coefficients(&self) -> (f64, f64, f64, f64) {
        if self.electric {
            (
                self.eps0 * self.eps_perp,
                self.eps0 * self.eps_a,
                self.e_s,
                self.e_b,
            )
        } else {
            (0.0, 0.0, 0.0, 0.0)
        }
    }
}

/// Field values at one point. Gradients are `[d/dx, d/dy]`, second
/// derivatives `[xx, xy, yy]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointFields {
    pub n: [f64; 3],
    pub grad_n: [[f64; 2]; 3],
    pub hess_n: Option<[[f64; 3]; 3]>,
    pub phi: f64,
    pub grad_phi: [f64; 2],
    pub hess_phi: Option<[f64; 3]>,
    pub lambda: f64,
}

impl PointFields {
    pub fn div_n(&self) -> f64 {
        self.grad_n[0][0] + self.grad_n[1][1]
    }

    pub fn curl_n(&self) -> [f64; 3] {
        let g = &self.grad_n;
        [g[2][1], -g[2][0], g[1][0] - g[0][1]]
    }

    pub fn grad_phi3(&self) -> [f64; 3] {
        [self.grad_phi[0], self.grad_phi[1], 0.0]
    }

    /// `n . n - 1`.
    pub fn unit_defect(&self) -> f64 {
        dot(self.n, self.n) - 1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StrongResidual {
    pub p: [f64; 3],
    pub q: f64,
}

/// Single-side edge fluxes; the jump is formed by the caller.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluxJump {
    pub p_hat: [f64; 3],
    pub q_hat: f64,
}

pub fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(s: f64, a: [f64; 3]) -> [f64; 3] {
    [s * a[0], s * a[1], s * a[2]]
}

/// `Z = I - (1 - kappa) n (x) n`.
pub fn z_tensor(params: &MaterialParams, n: [f64; 3]) -> [[f64; 3]; 3] {
    let c = 1.0 - params.kappa();
    let mut z = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            z[i][j] = if i == j { 1.0 } else { 0.0 } - c * n[i] * n[j];
        }
    }
    z
}

/// Energy integrand: model energy plus `zeta/2 (n.n-1)^2` (penalty) or
/// `lambda/2 (n.n-1)` (Lagrangian).
pub fn energy_density(params: &MaterialParams, pt: &PointFields) -> f64 {
    model_energy_density(params, pt) + constraint_energy_density(params, pt)
}

/// Integrand of the model free energy alone.
pub fn model_energy_density(params: &MaterialParams, pt: &PointFields) -> f64 {
    let (ep, ea, es, eb) = params.electric_coefficients();
    let d = pt.div_n();
    let c = pt.curl_n();
    let g = pt.grad_phi3();
    let s = dot(pt.n, c);
    let t = dot(pt.n, g);
    let mut w = 0.5 * params.k1 * d * d + 0.5 * params.k3 * dot(c, c)
        - 0.5 * (params.k3 - params.k2) * s * s;
    if params.electric {
        w += -0.5 * ep * dot(g, g) - 0.5 * ea * t * t + es * d * t + eb * dot(cross(pt.n, c), g);
    }
    w
}

pub fn constraint_energy_density(params: &MaterialParams, pt: &PointFields) -> f64 {
    let m = pt.unit_defect();
    match params.formulation {
        Formulation::Penalty => 0.5 * params.zeta * m * m,
        Formulation::Lagrangian => 0.5 * pt.lambda * m,
    }
}

/// Number of local jet variables: `n (3), grad n (6), grad phi (2), lambda (1)`.
pub const NJ: usize = 12;

/// Jet slot of component `i` of `n`.
pub const fn jet_n(i: usize) -> usize {
    i
}

/// Jet slot of `d n_i / d x_dir`.
pub const fn jet_grad_n(i: usize, dir: usize) -> usize {
    3 + 2 * i + dir
}

pub const fn jet_grad_phi(dir: usize) -> usize {
    9 + dir
}

pub const JET_LAMBDA: usize = 11;

pub fn jet_of(pt: &PointFields) -> [f64; NJ] {
    let mut u = [0.0; NJ];
    for i in 0..3 {
        u[jet_n(i)] = pt.n[i];
        u[jet_grad_n(i, 0)] = pt.grad_n[i][0];
        u[jet_grad_n(i, 1)] = pt.grad_n[i][1];
    }
    u[jet_grad_phi(0)] = pt.grad_phi[0];
    u[jet_grad_phi(1)] = pt.grad_phi[1];
    u[JET_LAMBDA] = pt.lambda;
    u
}

/// Value, gradient and Hessian of the energy integrand with respect to the jet.
#[derive(Clone, Debug)]
pub struct EnergyJet {
    pub value: f64,
    pub grad: [f64; NJ],
    pub hess: [[f64; NJ]; NJ],
}

type Lin = [f64; NJ];

fn unit(k: usize) -> Lin {
    let mut e = [0.0; NJ];
    e[k] = 1.0;
    e
}

fn axpy(y: &mut Lin, a: f64, x: &Lin) {
    for k in 0..NJ {
        y[k] += a * x[k];
    }
}

fn outer(h: &mut [[f64; NJ]; NJ], s: f64, a: &Lin, b: &Lin) {
    if s == 0.0 {
        return;
    }
    for i in 0..NJ {
        if a[i] == 0.0 {
            continue;
        }
        let ai = s * a[i];
        for j in 0..NJ {
            h[i][j] += ai * b[j];
        }
    }
}

/// Symmetric rank-2 update `s (a b^T + b a^T)`.
fn outer_sym(h: &mut [[f64; NJ]; NJ], s: f64, a: &Lin, b: &Lin) {
    outer(h, s, a, b);
    outer(h, s, b, a);
}

const LEVI: [(usize, usize, usize, f64); 6] = [
    (0, 1, 2, 1.0),
    (1, 2, 0, 1.0),
    (2, 0, 1, 1.0),
    (0, 2, 1, -1.0),
    (2, 1, 0, -1.0),
    (1, 0, 2, -1.0),
];

/// Exact derivatives of [`energy_density`] with respect to [`jet_of`]`(pt)`.
pub fn energy_jet(params: &MaterialParams, pt: &PointFields) -> EnergyJet {
    let (ep, ea, es, eb) = params.electric_coefficients();
    let mut grad = [0.0; NJ];
    let mut hess = [[0.0; NJ]; NJ];

    // linear forms of the jet
    let dn: [Lin; 3] = [unit(jet_n(0)), unit(jet_n(1)), unit(jet_n(2))];
    let mut dd = [0.0; NJ];
    dd[jet_grad_n(0, 0)] = 1.0;
    dd[jet_grad_n(1, 1)] = 1.0;
    let mut dc = [[0.0; NJ]; 3];
    dc[0][jet_grad_n(2, 1)] = 1.0;
    dc[1][jet_grad_n(2, 0)] = -1.0;
    dc[2][jet_grad_n(1, 0)] = 1.0;
    dc[2][jet_grad_n(0, 1)] = -1.0;
    let dg: [Lin; 3] = [unit(jet_grad_phi(0)), unit(jet_grad_phi(1)), [0.0; NJ]];

    let n = pt.n;
    let d = pt.div_n();
    let c = pt.curl_n();
    let g = pt.grad_phi3();

    // splay
    axpy(&mut grad, params.k1 * d, &dd);
    outer(&mut hess, params.k1, &dd, &dd);

    // K3 |curl n|^2 / 2
    for k in 0..3 {
        axpy(&mut grad, params.k3 * c[k], &dc[k]);
        outer(&mut hess, params.k3, &dc[k], &dc[k]);
    }

    // -(K3-K2)/2 (n . curl n)^2
    let kk = -(params.k3 - params.k2);
    if kk != 0.0 {
        let s = dot(n, c);
        let mut ds = [0.0; NJ];
        for k in 0..3 {
            axpy(&mut ds, c[k], &dn[k]);
            axpy(&mut ds, n[k], &dc[k]);
        }
        axpy(&mut grad, kk * s, &ds);
        outer(&mut hess, kk, &ds, &ds);
        for k in 0..3 {
            outer_sym(&mut hess, kk * s, &dn[k], &dc[k]);
        }
    }

    if params.electric {
        // -eps0 eps_perp |grad phi|^2 / 2
        for j in 0..2 {
            axpy(&mut grad, -ep * g[j], &dg[j]);
            outer(&mut hess, -ep, &dg[j], &dg[j]);
        }
        let t = dot(n, g);
        let mut dt = [0.0; NJ];
        for j in 0..2 {
            axpy(&mut dt, g[j], &dn[j]);
            axpy(&mut dt, n[j], &dg[j]);
        }
        // -eps0 eps_a (n . grad phi)^2 / 2
        axpy(&mut grad, -ea * t, &dt);
        outer(&mut hess, -ea, &dt, &dt);
        for j in 0..2 {
            outer_sym(&mut hess, -ea * t, &dn[j], &dg[j]);
        }
        // e_s (div n)(n . grad phi)
        axpy(&mut grad, es * t, &dd);
        axpy(&mut grad, es * d, &dt);
        outer_sym(&mut hess, es, &dd, &dt);
        for j in 0..2 {
            outer_sym(&mut hess, es * d, &dn[j], &dg[j]);
        }
        // e_b (n x curl n) . grad phi = sum eps_ijk g_i n_j c_k
        if eb != 0.0 {
            for &(i, j, k, sgn) in &LEVI {
                let s = eb * sgn;
                axpy(&mut grad, s * n[j] * c[k], &dg[i]);
                axpy(&mut grad, s * g[i] * c[k], &dn[j]);
                axpy(&mut grad, s * g[i] * n[j], &dc[k]);
                outer_sym(&mut hess, s * c[k], &dg[i], &dn[j]);
                outer_sym(&mut hess, s * n[j], &dg[i], &dc[k]);
                outer_sym(&mut hess, s * g[i], &dn[j], &dc[k]);
            }
        }
    }

    let m = dot(n, n) - 1.0;
    let mut dm = [0.0; NJ];
    for k in 0..3 {
        axpy(&mut dm, 2.0 * n[k], &dn[k]);
    }
    match params.formulation {
        Formulation::Penalty => {
            let z = params.zeta;
            axpy(&mut grad, z * m, &dm);
            outer(&mut hess, z, &dm, &dm);
            for k in 0..3 {
                outer(&mut hess, 2.0 * z * m, &dn[k], &dn[k]);
            }
        }
        Formulation::Lagrangian => {
            let lam = pt.lambda;
            let el = unit(JET_LAMBDA);
            axpy(&mut grad, 0.5 * lam, &dm);
            axpy(&mut grad, 0.5 * m, &el);
            for k in 0..3 {
                outer(&mut hess, lam, &dn[k], &dn[k]);
            }
            outer_sym(&mut hess, 0.5, &dm, &el);
        }
    }

    for i in 0..NJ {
        for j in 0..i {
            let a = 0.5 * (hess[i][j] + hess[j][i]);
            hess[i][j] = a;
            hess[j][i] = a;
        }
    }

    EnergyJet {
        value: energy_density(params, pt),
        grad,
        hess,
    }
}

/// Test functions at one point for the weak form.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TestFunctions {
    pub v: [f64; 3],
    pub grad_v: [[f64; 2]; 3],
    pub grad_psi: [f64; 2],
    pub gamma: f64,
}

/// Integrand contributions of the first variation, split by test block.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WeakIntegrand {
    pub director: f64,
    pub potential: f64,
    pub multiplier: f64,
}

impl WeakIntegrand {
    pub fn total(&self) -> f64 {
        self.director + self.potential + self.multiplier
    }
}

/// Integrand of the first-order optimality conditions written term by term.
pub fn weak_integrands(
    params: &MaterialParams,
    pt: &PointFields,
    test: &TestFunctions,
) -> WeakIntegrand {
    let (ep, ea, es, eb) = params.electric_coefficients();
    let n = pt.n;
    let d = pt.div_n();
    let c = pt.curl_n();
    let g = pt.grad_phi3();
    let t = dot(n, g);
    let s = dot(n, c);
    let v = test.v;
    let gv = &test.grad_v;
    let div_v = gv[0][0] + gv[1][1];
    let curl_v = [gv[2][1], -gv[2][0], gv[1][0] - gv[0][1]];
    let gpsi = [test.grad_psi[0], test.grad_psi[1], 0.0];
    let z = z_tensor(params, n);
    let zc = [dot(z[0], c), dot(z[1], c), dot(z[2], c)];
    let m = dot(n, n) - 1.0;

    let mut director = params.k1 * d * div_v
        + params.k3 * dot(zc, curl_v)
        + (params.k2 - params.k3) * s * dot(v, c);
    let mut potential = 0.0;
    if params.electric {
        director += -ea * t * dot(v, g)
            + es * (d * dot(v, g) + div_v * t)
            + eb * (dot(cross(n, curl_v), g) + dot(cross(v, c), g));
        potential = -ep * dot(g, gpsi) - ea * t * dot(n, gpsi)
            + es * d * dot(n, gpsi)
            + eb * dot(cross(n, c), gpsi);
    }
    let mut multiplier = 0.0;
    match params.formulation {
        Formulation::Penalty => director += 2.0 * params.zeta * dot(v, n) * m,
        Formulation::Lagrangian => {
            director += pt.lambda * dot(n, v);
            multiplier = 0.5 * test.gamma * m;
        }
    }
    WeakIntegrand {
        director,
        potential,
        multiplier,
    }
}

/// Scalar with its planar gradient.
#[derive(Clone, Copy, Debug)]
struct SJet {
    v: f64,
    dx: f64,
    dy: f64,
}

/// 3-vector with its planar derivatives.
#[derive(Clone, Copy, Debug)]
struct VJet {
    v: [f64; 3],
    dx: [f64; 3],
    dy: [f64; 3],
}

impl VJet {
    fn dot(self, o: VJet) -> SJet {
        SJet {
            v: dot(self.v, o.v),
            dx: dot(self.dx, o.v) + dot(self.v, o.dx),
            dy: dot(self.dy, o.v) + dot(self.v, o.dy),
        }
    }

    fn cross(self, o: VJet) -> VJet {
        VJet {
            v: cross(self.v, o.v),
            dx: add(cross(self.dx, o.v), cross(self.v, o.dx)),
            dy: add(cross(self.dy, o.v), cross(self.v, o.dy)),
        }
    }

    fn scaled(self, s: SJet) -> VJet {
        VJet {
            v: scale(s.v, self.v),
            dx: add(scale(s.dx, self.v), scale(s.v, self.dx)),
            dy: add(scale(s.dy, self.v), scale(s.v, self.dy)),
        }
    }

    fn axpy(self, a: f64, o: VJet) -> VJet {
        VJet {
            v: add(self.v, scale(a, o.v)),
            dx: add(self.dx, scale(a, o.dx)),
            dy: add(self.dy, scale(a, o.dy)),
        }
    }

    fn times(self, a: f64) -> VJet {
        VJet {
            v: scale(a, self.v),
            dx: scale(a, self.dx),
            dy: scale(a, self.dy),
        }
    }

    fn div(self) -> f64 {
        self.dx[0] + self.dy[1]
    }

    fn curl(self) -> [f64; 3] {
        [self.dy[2], -self.dx[2], self.dx[1] - self.dy[0]]
    }
}

impl SJet {
    fn grad(self) -> [f64; 3] {
        [self.dx, self.dy, 0.0]
    }
}

struct Jets {
    n: VJet,
    c: VJet,
    g: VJet,
    d: SJet,
}

fn jets(pt: &PointFields) -> Result<Jets> {
    let (Some(hn), Some(hp)) = (pt.hess_n, pt.hess_phi) else {
        return Err(Error::MissingSecondDerivatives);
    };
    let gn = &pt.grad_n;
    let n = VJet {
        v: pt.n,
        dx: [gn[0][0], gn[1][0], gn[2][0]],
        dy: [gn[0][1], gn[1][1], gn[2][1]],
    };
    // hn[i] = [xx, xy, yy] of n_i
    let c = VJet {
        v: pt.curl_n(),
        dx: [hn[2][1], -hn[2][0], hn[1][0] - hn[0][1]],
        dy: [hn[2][2], -hn[2][1], hn[1][1] - hn[0][2]],
    };
    let g = VJet {
        v: pt.grad_phi3(),
        dx: [hp[0], hp[1], 0.0],
        dy: [hp[1], hp[2], 0.0],
    };
    let d = SJet {
        v: pt.div_n(),
        dx: hn[0][0] + hn[1][1],
        dy: hn[0][1] + hn[1][2],
    };
    Ok(Jets { n, c, g, d })
}

/// Strong-form residuals: `p` for the director equation (or `p + lambda n`
/// with `zeta = 0` in the Lagrangian formulation) and `q` for Gauss' law.
pub fn strong_residuals(params: &MaterialParams, pt: &PointFields) -> Result<StrongResidual> {
    let Jets { n, c, g, d } = jets(pt)?;
    let (ep, ea, es, eb) = params.electric_coefficients();
    let kappa = params.kappa();
    let s = n.dot(c);
    let zc = c.axpy(-(1.0 - kappa), n.scaled(s));

    let mut p = scale(-params.k1, d.grad());
    p = add(p, scale(params.k3, zc.curl()));
    p = add(p, scale((params.k2 - params.k3) * s.v, c.v));
    let m = dot(n.v, n.v) - 1.0;
    match params.formulation {
        Formulation::Penalty => p = add(p, scale(2.0 * params.penalty() * m, n.v)),
        Formulation::Lagrangian => p = add(p, scale(pt.lambda, n.v)),
    }
    let mut q = 0.0;
    if params.electric {
        let t = n.dot(g);
        p = add(p, scale(-ea * t.v, g.v));
        p = add(p, scale(es * d.v, g.v));
        p = add(p, scale(-es, t.grad()));
        p = add(p, scale(eb, cross(c.v, g.v)));
        p = add(p, scale(eb, g.cross(n).curl()));

        let lap_phi = g.div();
        q = ep * lap_phi + ea * n.scaled(t).div() - es * n.scaled(d).div() - eb * n.cross(c).div();
    }
    Ok(StrongResidual { p, q })
}

/// Single-side edge fluxes for unit normal `eta`.
pub fn side_flux(params: &MaterialParams, pt: &PointFields, eta: [f64; 2]) -> FluxJump {
    let (_, _, es, eb) = params.electric_coefficients();
    let eta3 = [eta[0], eta[1], 0.0];
    let n = pt.n;
    let d = pt.div_n();
    let c = pt.curl_n();
    let g = pt.grad_phi3();
    let s = dot(n, c);
    let zc = add(c, scale(-(1.0 - params.kappa()) * s, n));
    let mut p_hat = add(
        scale(params.k1 * d, eta3),
        scale(params.k3, cross(zc, eta3)),
    );
    let mut q_hat = 0.0;
    if params.electric {
        let t = dot(n, g);
        p_hat = add(p_hat, scale(es * t, eta3));
        p_hat = add(p_hat, scale(eb, cross(cross(g, n), eta3)));
        q_hat = dot(electric_displacement(params, pt), eta3);
    }
    FluxJump { p_hat, q_hat }
}

/// Electric displacement `D`.
pub fn electric_displacement(params: &MaterialParams, pt: &PointFields) -> [f64; 3] {
    let (ep, ea, es, eb) = params.electric_coefficients();
    let n = pt.n;
    let g = pt.grad_phi3();
    let t = dot(n, g);
    let mut dvec = scale(-ep, g);
    dvec = add(dvec, scale(-ea * t, n));
    dvec = add(dvec, scale(es * pt.div_n(), n));
    add(dvec, scale(eb, cross(n, pt.curl_n())))
}

/// `div D`, expanded with the product rule from the displacement itself.
pub fn div_displacement(params: &MaterialParams, pt: &PointFields) -> Result<f64> {
    let Jets { n, c, g, d } = jets(pt)?;
    let (ep, ea, es, eb) = params.electric_coefficients();
    let t = n.dot(g);
    let dj = g
        .times(-ep)
        .axpy(-ea, n.scaled(t))
        .axpy(es, n.scaled(d))
        .axpy(eb, n.cross(c));
    Ok(dj.div())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(n: [f64; 3]) -> PointFields {
        PointFields {
            n,
            hess_n: Some([[0.0; 3]; 3]),
            hess_phi: Some([0.0; 3]),
            ..Default::default()
        }
    }

    #[test]
    fn z_tensor_cases() {
        let p = MaterialParams::elastic(Formulation::Penalty, 1.0);
        let z = z_tensor(&p, [0.3, 0.4, 0.5]);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(z[i][j], if i == j { 1.0 } else { 0.0 });
            }
        }
        let p = MaterialParams::flexo_5cb(Formulation::Penalty, 1e5);
        let z = z_tensor(&p, [0.0, 0.0, 1.0]);
        assert!((z[2][2] - 0.62903 / 1.32258).abs() < 1e-15);
        assert!((z[2][2] - 0.47561).abs() < 1e-5);
        assert_eq!(z[0][0], 1.0);
        let z = z_tensor(&p, [0.0; 3]);
        assert_eq!(z[2][2], 1.0);
    }

    #[test]
    fn energy_density_cases() {
        let p = MaterialParams::flexo_5cb(Formulation::Penalty, 1e5);
        assert_eq!(energy_density(&p, &constant([0.0, 0.0, 1.0])), 0.0);

        let mut q = p.clone();
        q.e_s = 0.0;
        q.e_b = 0.0;
        let mut pt = constant([0.0, 0.0, 1.0]);
        pt.grad_phi = [0.7, -1.3];
        let expect = -0.5 * q.eps0 * q.eps_perp * (0.49 + 1.69);
        assert!((energy_density(&q, &pt) - expect).abs() < 1e-13);

        let e = MaterialParams::elastic(Formulation::Penalty, 3.0);
        assert_eq!(
            energy_density(&e, &constant([0.0, 0.0, 2.0])),
            0.5 * 3.0 * 9.0
        );
    }

    #[test]
    fn strong_residual_laplacian_case() {
        // n = (x^2, xy, 0) at (x, y) = (0.3, 0.6): -lap n = (-2, 0, 0)
        let (x, y) = (0.3, 0.6);
        let zeta = 2.5;
        let p = MaterialParams::elastic(Formulation::Penalty, zeta);
        let pt = PointFields {
            n: [x * x, x * y, 0.0],
            grad_n: [[2.0 * x, 0.0], [y, x], [0.0, 0.0]],
            hess_n: Some([[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0; 3]]),
            hess_phi: Some([0.0; 3]),
            ..Default::default()
        };
        let r = strong_residuals(&p, &pt).unwrap();
        let m = pt.unit_defect();
        let expect = [-2.0 + 2.0 * zeta * m * x * x, 2.0 * zeta * m * x * y, 0.0];
        for k in 0..3 {
            assert!(
                (r.p[k] - expect[k]).abs() < 1e-13,
                "{:?} vs {:?}",
                r.p,
                expect
            );
        }
    }

    #[test]
    fn gauss_residual_for_radial_potential() {
        let p = MaterialParams::flexo_5cb(Formulation::Penalty, 1e5);
        let (x, y) = (0.2, 0.9);
        let mut pt = constant([0.0, 0.0, 1.0]);
        pt.phi = x * x + y * y;
        pt.grad_phi = [2.0 * x, 2.0 * y];
        pt.hess_phi = Some([2.0, 0.0, 2.0]);
        let r = strong_residuals(&p, &pt).unwrap();
        assert!((r.q - 4.0 * p.eps0 * p.eps_perp).abs() < 1e-12);
    }

    #[test]
    fn strong_residuals_need_second_derivatives() {
        let p = MaterialParams::elastic(Formulation::Penalty, 1.0);
        let pt = PointFields::default();
        assert!(matches!(
            strong_residuals(&p, &pt),
            Err(Error::MissingSecondDerivatives)
        ));
    }

    #[test]
    fn side_flux_cases() {
        let mut p = MaterialParams::flexo_5cb(Formulation::Penalty, 1e5);
        p.e_s = 0.0;
        p.e_b = 0.0;
        let mut pt = constant([0.0, 0.0, 1.0]);
        pt.grad_phi = [0.8, -0.1];
        let f = side_flux(&p, &pt, [1.0, 0.0]);
        assert!((f.q_hat + p.eps0 * p.eps_perp * 0.8).abs() < 1e-14);

        // n = (y, x, 0): div n = 0, curl n = (0, 0, 0)
        let e = MaterialParams::elastic(Formulation::Penalty, 1.0);
        let pt = PointFields {
            n: [0.4, 0.3, 0.0],
            grad_n: [[0.0, 1.0], [1.0, 0.0], [0.0, 0.0]],
            ..Default::default()
        };
        let f = side_flux(&e, &pt, [0.0, 1.0]);
        assert_eq!(f.p_hat, [0.0, 0.0, 0.0]);
        // n = (-y, x, 0): curl n = (0,0,2), (curl n) x eta for eta = (1,0,0) is (0,2,0)
        let pt = PointFields {
            n: [-0.3, 0.4, 0.0],
            grad_n: [[0.0, -1.0], [1.0, 0.0], [0.0, 0.0]],
            ..Default::default()
        };
        let f = side_flux(&e, &pt, [1.0, 0.0]);
        assert_eq!(f.p_hat, [0.0, 2.0, 0.0]);
    }

    #[test]
    fn displacement_cases() {
        let p = MaterialParams::flexo_5cb(Formulation::Penalty, 1e5);
        assert_eq!(
            electric_displacement(&p, &constant([0.0, 0.0, 1.0])),
            [0.0; 3]
        );
        let mut pt = constant([0.0, 0.0, 1.0]);
        pt.grad_phi = [1.5, -0.5];
        let dvec = electric_displacement(&p, &pt);
        let k = p.eps0 * p.eps_perp;
        assert!(
            (dvec[0] + k * 1.5).abs() < 1e-14
                && (dvec[1] - k * 0.5).abs() < 1e-14
                && dvec[2] == 0.0
        );
    }

    #[test]
    fn params_validation() {
        let mut p = MaterialParams::elastic(Formulation::Penalty, 0.0);
        assert!(p.validate().is_err());
        p.formulation = Formulation::Lagrangian;
        assert!(p.validate().is_ok());
        p.k2 = 0.0;
        assert!(p.validate().is_err());
    }
}
