//! Exact solution of the 1D Euler Riemann problem (ideal gas): Newton
//! iteration on the pressure function, self-similar sampling of the wave
//! fan. Used as the ground-truth oracle for shock-tube validation.

use crate::error::ParamError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiemannState {
    pub rho: f64,
    pub u: f64,
    pub p: f64,
}

impl RiemannState {
    pub fn sound_speed(&self, gamma: f64) -> f64 {
        (gamma * self.p / self.rho).sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct RiemannSolution {
    pub left: RiemannState,
    pub right: RiemannState,
    pub gamma: f64,
    pub p_star: f64,
    pub u_star: f64,
}

/// `f(p, state)` of the pressure equation and its derivative.
fn pressure_fn(p: f64, s: &RiemannState, gamma: f64) -> (f64, f64) {
    if p > s.p {
        // Shock branch.
        let a_coef = 2.0 / ((gamma + 1.0) * s.rho);
        let b_coef = (gamma - 1.0) / (gamma + 1.0) * s.p;
        let root = (a_coef / (p + b_coef)).sqrt();
        let f = (p - s.p) * root;
        let df = root * (1.0 - 0.5 * (p - s.p) / (b_coef + p));
        (f, df)
    } else {
        // Rarefaction branch.
        let a = s.sound_speed(gamma);
        let ex = (gamma - 1.0) / (2.0 * gamma);
        let f = 2.0 * a / (gamma - 1.0) * ((p / s.p).powf(ex) - 1.0);
        let df = (p / s.p).powf(-(gamma + 1.0) / (2.0 * gamma)) / (s.rho * a);
        (f, df)
    }
}

/// Star-region pressure/velocity by Newton iteration on the pressure
/// function, with the primitive-variable guess.
pub fn solve_riemann(
    left: RiemannState,
    right: RiemannState,
    gamma: f64,
) -> Result<RiemannSolution, ParamError> {
    for (s, side) in [(left, "left"), (right, "right")] {
        if !(s.rho > 0.0 && s.p > 0.0) {
            return Err(ParamError::new(format!("inadmissible {side} state")));
        }
    }
    let du = right.u - left.u;
    let a_l = left.sound_speed(gamma);
    let a_r = right.sound_speed(gamma);
    if 2.0 / (gamma - 1.0) * (a_l + a_r) <= du {
        return Err(ParamError::new("vacuum forms; no positive-pressure solution"));
    }

    let p_guess = {
        let pv = 0.5 * (left.p + right.p)
            - 0.125 * du * (left.rho + right.rho) * (a_l + a_r);
        pv.max(1e-10 * (left.p + right.p))
    };

    let mut p = p_guess;
    for _ in 0..100 {
        let (fl, dfl) = pressure_fn(p, &left, gamma);
        let (fr, dfr) = pressure_fn(p, &right, gamma);
        let g = fl + fr + du;
        let dg = dfl + dfr;
        let step = g / dg;
        let p_new = (p - step).max(1e-14 * p);
        if (p_new - p).abs() / (0.5 * (p_new + p)) < 1e-14 {
            p = p_new;
            break;
        }
        p = p_new;
    }
    let (fl, _) = pressure_fn(p, &left, gamma);
    let (fr, _) = pressure_fn(p, &right, gamma);
    let u_star = 0.5 * (left.u + right.u) + 0.5 * (fr - fl);
    Ok(RiemannSolution {
        left,
        right,
        gamma,
        p_star: p,
        u_star,
    })
}

impl RiemannSolution {
    /// State at similarity coordinate `xi = (x - x0) / t`.
    pub fn sample(&self, xi: f64) -> RiemannState {
        let g = self.gamma;
        let (p_star, u_star) = (self.p_star, self.u_star);
        if xi <= u_star {
            // Left of the contact.
            let s = &self.left;
            let a = s.sound_speed(g);
            if p_star > s.p {
                // Left shock.
                let pr = p_star / s.p;
                let speed =
                    s.u - a * ((g + 1.0) / (2.0 * g) * pr + (g - 1.0) / (2.0 * g)).sqrt();
                if xi <= speed {
                    *s
                } else {
                    let rho = s.rho * (pr + (g - 1.0) / (g + 1.0))
                        / (pr * (g - 1.0) / (g + 1.0) + 1.0);
                    RiemannState {
                        rho,
                        u: u_star,
                        p: p_star,
                    }
                }
            } else {
                // Left rarefaction.
                let a_star = a * (p_star / s.p).powf((g - 1.0) / (2.0 * g));
                let head = s.u - a;
                let tail = u_star - a_star;
                if xi <= head {
                    *s
                } else if xi >= tail {
                    let rho = s.rho * (p_star / s.p).powf(1.0 / g);
                    RiemannState {
                        rho,
                        u: u_star,
                        p: p_star,
                    }
                } else {
                    // Inside the fan.
                    let u = 2.0 / (g + 1.0) * (a + (g - 1.0) / 2.0 * s.u + xi);
                    let a_loc = 2.0 / (g + 1.0) * (a + (g - 1.0) / 2.0 * (s.u - xi));
                    let rho = s.rho * (a_loc / a).powf(2.0 / (g - 1.0));
                    let p = s.p * (a_loc / a).powf(2.0 * g / (g - 1.0));
                    RiemannState { rho, u, p }
                }
            }
        } else {
            // Right of the contact.
            let s = &self.right;
            let a = s.sound_speed(g);
            if p_star > s.p {
                // Right shock.
                let pr = p_star / s.p;
                let speed =
                    s.u + a * ((g + 1.0) / (2.0 * g) * pr + (g - 1.0) / (2.0 * g)).sqrt();
                if xi >= speed {
                    *s
                } else {
                    let rho = s.rho * (pr + (g - 1.0) / (g + 1.0))
                        / (pr * (g - 1.0) / (g + 1.0) + 1.0);
                    RiemannState {
                        rho,
                        u: u_star,
                        p: p_star,
                    }
                }
            } else {
                // Right rarefaction.
                let a_star = a * (p_star / s.p).powf((g - 1.0) / (2.0 * g));
                let head = s.u + a;
                let tail = u_star + a_star;
                if xi >= head {
                    *s
                } else if xi <= tail {
                    let rho = s.rho * (p_star / s.p).powf(1.0 / g);
                    RiemannState {
                        rho,
                        u: u_star,
                        p: p_star,
                    }
                } else {
                    let u = 2.0 / (g + 1.0) * (-a + (g - 1.0) / 2.0 * s.u + xi);
                    let a_loc = 2.0 / (g + 1.0) * (a - (g - 1.0) / 2.0 * (s.u - xi));
                    let rho = s.rho * (a_loc / a).powf(2.0 / (g - 1.0));
                    let p = s.p * (a_loc / a).powf(2.0 * g / (g - 1.0));
                    RiemannState { rho, u, p }
                }
            }
        }
    }
}

/// Exact solution at position `x` and time `t > 0` of the Riemann problem
/// with the jump at `x0`.
pub fn exact_riemann_solution(
    x: f64,
    t: f64,
    x0: f64,
    left: RiemannState,
    right: RiemannState,
    gamma: f64,
) -> Result<RiemannState, ParamError> {
    if !(t > 0.0) {
        return Err(ParamError::new("sampling time must be positive"));
    }
    let sol = solve_riemann(left, right, gamma)?;
    Ok(sol.sample((x - x0) / t))
}
