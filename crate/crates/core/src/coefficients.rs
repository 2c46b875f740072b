//! Closed-form learning coefficients for Poisson-gamma NMF.
//!
//! Everything here is exact rational arithmetic. Hyperparameters given as
//! `f64` are converted through their shortest decimal representation, so
//! `0.25` becomes exactly 1/4 and `0.1` exactly 1/10.
//!
//! Notation: a = M·φ_U, b = N·φ_V, and the phase-transition surface of the
//! variational coefficient is a + b = (M + N)/2.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{Hyperparameters, ModelDims};

pub type Rational = Ratio<i128>;

/// Parses `"3"`, `"0.25"`, `"-1.5"` or `"9/2"` into an exact rational.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let text = text.trim();
    if let Some((num, den)) = text.split_once('/') {
        let num: i128 = num.trim().parse().map_err(|_| Error::config(format!("bad rational {text:?}")))?;
        let den: i128 = den.trim().parse().map_err(|_| Error::config(format!("bad rational {text:?}")))?;
        if den == 0 {
            return Err(Error::config(format!("zero denominator in {text:?}")));
        }
        return Ok(Rational::new(num, den));
    }
    let (negative, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty()
        || !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit())
        || frac_part.len() > 30
    {
        return Err(Error::config(format!("not a decimal number: {text:?}")));
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: i128 = if digits.is_empty() {
        0
    } else {
        digits.parse().map_err(|_| Error::config(format!("decimal too long: {text:?}")))?
    };
    let denom = 10i128.pow(frac_part.len() as u32);
    let value = Rational::new(numer, denom);
    Ok(if negative { -value } else { value })
}

/// Exact rational for the shortest decimal that round-trips `x`.
pub fn rational_from_f64(x: f64) -> Result<Rational> {
    if !x.is_finite() {
        return Err(Error::domain(format!("{x} has no rational value")));
    }
    parse_rational(&format!("{x}"))
}

/// Shapes of the two gamma priors as exact rationals. Rates do not enter
/// any coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PriorShapes {
    pub phi_u: Rational,
    pub phi_v: Rational,
}

impl PriorShapes {
    pub fn new(phi_u: Rational, phi_v: Rational) -> Result<Self> {
        if phi_u <= Rational::zero() || phi_v <= Rational::zero() {
            return Err(Error::domain("gamma shapes must be positive"));
        }
        Ok(PriorShapes { phi_u, phi_v })
    }
}

impl TryFrom<&Hyperparameters> for PriorShapes {
    type Error = Error;

    fn try_from(h: &Hyperparameters) -> Result<Self> {
        PriorShapes::new(rational_from_f64(h.phi_u)?, rational_from_f64(h.phi_v)?)
    }
}

fn int(x: usize) -> Rational {
    Rational::from_integer(x as i128)
}

fn half() -> Rational {
    Rational::new(1, 2)
}

struct Terms {
    a: Rational,
    b: Rational,
    m_plus_n: Rational,
    h: Rational,
    h0: Rational,
}

impl Terms {
    fn new(dims: &ModelDims, shapes: &PriorShapes) -> Result<Self> {
        dims.validate()?;
        Ok(Terms {
            a: int(dims.m) * shapes.phi_u,
            b: int(dims.n) * shapes.phi_v,
            m_plus_n: int(dims.m + dims.n),
            h: int(dims.h),
            h0: int(dims.h0),
        })
    }

    fn below_transition(&self) -> bool {
        self.a + self.b < self.m_plus_n * half()
    }

    fn min_ab(&self) -> Rational {
        self.a.min(self.b)
    }

    fn max_ab(&self) -> Rational {
        self.a.max(self.b)
    }
}

/// Which side of the phase transition the variational coefficient is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VbBranch {
    BelowTransition,
    AtOrAboveTransition,
}

pub fn vb_branch(dims: &ModelDims, shapes: &PriorShapes) -> Result<VbBranch> {
    let t = Terms::new(dims, shapes)?;
    Ok(if t.below_transition() { VbBranch::BelowTransition } else { VbBranch::AtOrAboveTransition })
}

/// Coefficient of log n in the variational free energy.
pub fn lambda_vb(dims: &ModelDims, shapes: &PriorShapes) -> Result<Rational> {
    let t = Terms::new(dims, shapes)?;
    Ok(if t.below_transition() {
        (t.h - t.h0) * (t.a + t.b) + t.h0 * t.m_plus_n * half()
    } else {
        t.h * t.m_plus_n * half()
    })
}

/// Upper bound on the real log canonical threshold:
/// ½[(H − H0)·min{Mφ_U, Nφ_V} + H0(M + N − 1)].
pub fn lambda_upper(dims: &ModelDims, shapes: &PriorShapes) -> Result<Rational> {
    let t = Terms::new(dims, shapes)?;
    Ok(half() * ((t.h - t.h0) * t.min_ab() + t.h0 * (t.m_plus_n - Rational::from_integer(1))))
}

/// The exact RLCT where it is known in closed form: H0 = 0 gives
/// H·min{Mφ_U, Nφ_V}/2, and H = H0 = 1 gives (M + N − 1)/2.
pub fn lambda_exact_special(dims: &ModelDims, shapes: &PriorShapes) -> Result<Option<Rational>> {
    let t = Terms::new(dims, shapes)?;
    Ok(if dims.h0 == 0 {
        Some(t.h * t.min_ab() * half())
    } else if dims.h == 1 && dims.h0 == 1 {
        Some((t.m_plus_n - Rational::from_integer(1)) * half())
    } else {
        None
    })
}

fn gap_formula(t: &Terms) -> Rational {
    if t.below_transition() {
        half() * ((t.h - t.h0) * (t.a + t.b + t.max_ab()) + t.h0)
    } else {
        half() * ((t.h - t.h0) * (t.m_plus_n - t.min_ab()) + t.h0)
    }
}

/// Lower bound on the coefficient of log n in F̄_n − F_n. Requires H0 > 0.
pub fn lambda_gap_lower(dims: &ModelDims, shapes: &PriorShapes) -> Result<Rational> {
    if dims.h0 == 0 {
        return Err(Error::domain("the free-energy gap bound needs a positive true rank H0"));
    }
    Ok(gap_formula(&Terms::new(dims, shapes)?))
}

/// The gap formula evaluated at any H0 including 0, used by rank selection.
pub fn lambda_gap_lower_extended(dims: &ModelDims, shapes: &PriorShapes) -> Result<Rational> {
    Ok(gap_formula(&Terms::new(dims, shapes)?))
}

/// Leading-order Bayesian bounds; the O_p(1), o(1/n) and multiplicity
/// (log log n) terms are not included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BayesBounds {
    /// nS_n + λ̄ log n
    pub free_energy_upper: f64,
    /// λ̄ / n
    pub generalization_upper: f64,
}

/// `n` is real-valued so the bounds can be evaluated off the integers.
pub fn bayes_bounds(dims: &ModelDims, shapes: &PriorShapes, n: f64, s_n: f64) -> Result<BayesBounds> {
    if !(n >= 1.0) {
        return Err(Error::domain("sample size must be at least 1"));
    }
    let upper = to_f64(lambda_upper(dims, shapes)?);
    let nf = n;
    Ok(BayesBounds {
        free_energy_upper: nf * s_n + upper * nf.ln(),
        generalization_upper: upper / nf,
    })
}

/// Picks the candidate rank minimizing F̄_n(H0) − λ̲(H0) log n, with λ̲
/// evaluated at the candidate H0 (extended to H0 = 0 by the same formula).
/// Ties go to the smaller rank. Infinite free energies never win.
pub fn select_rank(
    vb_free_energies: &BTreeMap<usize, f64>,
    dims: &ModelDims,
    shapes: &PriorShapes,
    n: usize,
) -> Result<usize> {
    let scores = rank_scores(vb_free_energies, dims, shapes, n)?;
    let mut best: Option<(usize, f64)> = None;
    for (&rank, &score) in &scores {
        if best.map_or(true, |(_, s)| score < s) {
            best = Some((rank, score));
        }
    }
    best.map(|(r, _)| r).ok_or_else(|| Error::config("no candidate ranks to select from"))
}

/// The penalized score of every candidate.
pub fn rank_scores(
    vb_free_energies: &BTreeMap<usize, f64>,
    dims: &ModelDims,
    shapes: &PriorShapes,
    n: usize,
) -> Result<BTreeMap<usize, f64>> {
    if vb_free_energies.is_empty() {
        return Err(Error::config("no candidate ranks to select from"));
    }
    if n == 0 {
        return Err(Error::domain("sample size must be positive"));
    }
    let log_n = (n as f64).ln();
    vb_free_energies
        .iter()
        .map(|(&rank, &f)| {
            if rank > dims.h {
                return Err(Error::domain(format!("candidate rank {rank} exceeds H={}", dims.h)));
            }
            let gap = to_f64(lambda_gap_lower_extended(&dims.with_h0(rank), shapes)?);
            Ok((rank, f - gap * log_n))
        })
        .collect()
}

pub fn to_f64(x: Rational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// A rational printed as `p/q` (or `p`) with its decimal value alongside.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Exact(pub Rational);

impl fmt::Display for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl Serialize for Exact {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Exact", 2)?;
        st.serialize_field("exact", &self.to_string())?;
        st.serialize_field("value", &to_f64(self.0))?;
        st.end()
    }
}

/// Every coefficient for one (dims, hyperparameters) setting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientReport {
    pub dims: ModelDims,
    pub hyper: Hyperparameters,
    pub lambda_vb: Exact,
    pub lambda_upper: Exact,
    /// Absent when H0 = 0.
    pub lambda_gap_lower: Option<Exact>,
    pub lambda_exact: Option<Exact>,
    pub regular_half_d: Exact,
    pub vb_branch: VbBranch,
}

impl CoefficientReport {
    pub fn compute(dims: &ModelDims, hyper: &Hyperparameters) -> Result<Self> {
        hyper.validate()?;
        let shapes = PriorShapes::try_from(hyper)?;
        Ok(CoefficientReport {
            dims: *dims,
            hyper: *hyper,
            lambda_vb: Exact(lambda_vb(dims, &shapes)?),
            lambda_upper: Exact(lambda_upper(dims, &shapes)?),
            lambda_gap_lower: if dims.h0 > 0 { Some(Exact(lambda_gap_lower(dims, &shapes)?)) } else { None },
            lambda_exact: lambda_exact_special(dims, &shapes)?.map(Exact),
            regular_half_d: Exact(int(dims.parameter_count()) * half()),
            vb_branch: vb_branch(dims, &shapes)?,
        })
    }

    pub fn table(&self) -> String {
        let d = &self.dims;
        let h = &self.hyper;
        let mut out = format!(
            "M={} N={} H={} H0={}  phi_U={} theta_U={} phi_V={} theta_V={}\n",
            d.m, d.n, d.h, d.h0, h.phi_u, h.theta_u, h.phi_v, h.theta_v
        );
        let mut row = |name: &str, v: Option<Exact>| {
            let text = match v {
                Some(x) => format!("{:<8} ({:.6})", x.to_string(), to_f64(x.0)),
                None => "-".to_string(),
            };
            out.push_str(&format!("  {name:<18} {text}\n"));
        };
        row("lambda_vb", Some(self.lambda_vb));
        row("lambda_upper", Some(self.lambda_upper));
        row("lambda_gap_lower", self.lambda_gap_lower);
        row("lambda_exact", self.lambda_exact);
        row("regular d/2", Some(self.regular_half_d));
        let branch = match self.vb_branch {
            VbBranch::BelowTransition => "below phase transition",
            VbBranch::AtOrAboveTransition => "at or above phase transition",
        };
        out.push_str(&format!("  {:<18} {branch}\n", "vb branch"));
        out
    }
}
