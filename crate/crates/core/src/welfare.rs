//! Welfare effects of accuracy and bias: an individual invests effort `e`
//! against a perceived success probability `p + b`, while true payoffs
//! accrue at probability `p`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};

type CostFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied cost with its first two derivatives.
#[derive(Clone)]
pub struct CustomCost {
    pub name: String,
    pub c: CostFn,
    pub dc: CostFn,
    pub d2c: CostFn,
}

impl CustomCost {
    pub fn new(
        name: impl Into<String>,
        c: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dc: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2c: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        CustomCost {
            name: name.into(),
            c: Arc::new(c),
            dc: Arc::new(dc),
            d2c: Arc::new(d2c),
        }
    }

    /// c(e) = k e² / 2.
    pub fn quadratic(k: f64) -> Self {
        CustomCost::new(format!("quad:{k}"), move |e| k * e * e / 2.0, move |e| k * e, move |_| k)
    }
}

impl fmt::Debug for CustomCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomCost").field("name", &self.name).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum CostSpec {
    /// c(e) = exp(γe)/γ.
    Exponential { gamma: f64 },
    Custom(CustomCost),
}

impl CostSpec {
    pub fn c(&self, e: f64) -> f64 {
        match self {
            CostSpec::Exponential { gamma } => (gamma * e).exp() / gamma,
            CostSpec::Custom(k) => (k.c)(e),
        }
    }

    pub fn dc(&self, e: f64) -> f64 {
        match self {
            CostSpec::Exponential { gamma } => (gamma * e).exp(),
            CostSpec::Custom(k) => (k.dc)(e),
        }
    }

    pub fn d2c(&self, e: f64) -> f64 {
        match self {
            CostSpec::Exponential { gamma } => gamma * (gamma * e).exp(),
            CostSpec::Custom(k) => (k.d2c)(e),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            CostSpec::Exponential { gamma } if !(*gamma > 0.0 && gamma.is_finite()) => {
                Err(Error::InvalidArgument(format!("γ must be positive, got {gamma}")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for CostSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostSpec::Exponential { gamma } => write!(f, "exp:{gamma}"),
            CostSpec::Custom(k) => f.write_str(&k.name),
        }
    }
}

/// `exp:<γ>` or `quad:<k>`.
impl FromStr for CostSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, val) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidArgument(format!("cost `{s}` should look like exp:<gamma> or quad:<k>")))?;
        let v: f64 = val
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad cost parameter `{val}`")))?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!("cost parameter must be positive, got {v}")));
        }
        match kind.trim() {
            "exp" | "exponential" => Ok(CostSpec::Exponential { gamma: v }),
            "quad" | "quadratic" => Ok(CostSpec::Custom(CustomCost::quadratic(v))),
            other => Err(Error::InvalidArgument(format!("unknown cost kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct WelfareScenario {
    p: f64,
    b: f64,
    pi: f64,
    cost: CostSpec,
}

impl WelfareScenario {
    /// Requires p ∈ [0,1], π > 0 and a belief p + b in (0, 1].
    pub fn new(p: f64, b: f64, pi: f64, cost: CostSpec) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("p = {p} outside [0, 1]")));
        }
        if !(pi > 0.0 && pi.is_finite()) {
            return Err(Error::InvalidArgument(format!("π must be positive, got {pi}")));
        }
        let q = p + b;
        if !(q > 0.0 && q <= 1.0 + 1e-12) || !b.is_finite() {
            return Err(Error::InvalidArgument(format!("belief p + b = {q} outside (0, 1]")));
        }
        cost.validate()?;
        Ok(WelfareScenario { p, b, pi, cost })
    }

    pub fn p(&self) -> f64 {
        self.p
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn pi(&self) -> f64 {
        self.pi
    }
    pub fn cost(&self) -> &CostSpec {
        &self.cost
    }
    pub fn belief(&self) -> f64 {
        self.p + self.b
    }

    /// Same scenario with p and b replaced.
    pub fn with(&self, p: f64, b: f64) -> Result<Self> {
        WelfareScenario::new(p, b, self.pi, self.cost.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Effort {
    pub e: f64,
    /// Effort came out at or below zero (π(p+b) ≤ 1 under exponential cost).
    pub non_positive: bool,
}

/// Perceived objective (p+b)·π·e − c(e).
pub fn perceived_value(s: &WelfareScenario, e: f64) -> f64 {
    s.belief() * s.pi * e - s.cost.c(e)
}

/// Effort equating marginal cost with the perceived marginal benefit π(p+b).
pub fn optimal_effort(s: &WelfareScenario) -> Result<Effort> {
    let target = s.belief() * s.pi;
    let e = match &s.cost {
        CostSpec::Exponential { gamma } => target.ln() / gamma,
        CostSpec::Custom(_) => solve_effort(&s.cost, target, false)?,
    };
    if let CostSpec::Custom(k) = &s.cost {
        if (k.dc)(e) <= 0.0 || (k.d2c)(e) < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "cost `{}` needs c′ > 0 and c″ ≥ 0 at the optimum e = {e}",
                k.name
            )));
        }
    }
    Ok(Effort { e, non_positive: e <= 0.0 })
}

/// Bisection for c′(e) = target, to |c′(e) − target| ≤ 1e−10·target. The
/// bracket starts at [0, 1]; the upper end doubles until bracketed, and the
/// lower end extends into negative effort only if `allow_negative`.
pub fn solve_effort(cost: &CostSpec, target: f64, allow_negative: bool) -> Result<f64> {
    let f = |e: f64| cost.dc(e) - target;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut steps = 0;
    while f(lo) > 0.0 {
        if !allow_negative || steps > 200 {
            return Err(Error::NotBracketed(format!("c′(0) = {} already exceeds {target}", cost.dc(0.0))));
        }
        lo = lo * 2.0 - 1.0;
        steps += 1;
    }
    steps = 0;
    while f(hi) < 0.0 {
        if steps > 200 || !hi.is_finite() {
            return Err(Error::NotBracketed(format!("c′ never reaches {target}")));
        }
        hi *= 2.0;
        steps += 1;
    }
    let tol = 1e-10 * target.abs();
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        if v.abs() <= tol * 1e-3 || hi - lo <= f64::EPSILON * mid.abs().max(1.0) {
            return Ok(mid);
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    if f(mid).abs() <= tol {
        Ok(mid)
    } else {
        Err(Error::NotBracketed(format!("bisection did not converge near e = {mid}")))
    }
}

/// True welfare p·π·e(p+b) − c(e(p+b)).
pub fn welfare(s: &WelfareScenario) -> Result<f64> {
    let e = optimal_effort(s)?.e;
    Ok(s.p * s.pi * e - s.cost.c(e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Derivatives {
    pub e: f64,
    pub dw_db: f64,
    pub dw_dp: f64,
    /// de/d(p+b).
    pub e_prime: f64,
    /// d²e/d(p+b)².
    pub e_double_prime: f64,
    /// c″(e) = 0, so effort responds without bound.
    pub e_prime_infinite: bool,
}

pub fn welfare_derivatives(s: &WelfareScenario) -> Result<Derivatives> {
    let e = optimal_effort(s)?.e;
    let q = s.belief();
    let (e1, e2) = match &s.cost {
        CostSpec::Exponential { gamma } => (1.0 / (gamma * q), -1.0 / (gamma * q * q)),
        CostSpec::Custom(k) => {
            let c2 = (k.d2c)(e);
            let e1 = s.pi / c2;
            // Differentiating c′(e(q)) = qπ twice gives e″ = −c‴ e′² / c″.
            let h = 1e-5 * e.abs().max(1.0);
            let c3 = ((k.d2c)(e + h) - (k.d2c)(e - h)) / (2.0 * h);
            (e1, -c3 * e1 * e1 / c2)
        }
    };
    let infinite = !e1.is_finite();
    if infinite {
        log::warn!("c″(e) = 0 at e = {e}: effort response is unbounded");
    }
    Ok(Derivatives {
        e,
        dw_db: -s.b * s.pi * e1,
        dw_dp: s.pi * e - s.b * s.pi * e1,
        e_prime: e1,
        e_double_prime: e2,
        e_prime_infinite: infinite,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaylorTerms {
    pub dp: f64,
    pub db: f64,
    /// π(e − be′)Δp
    pub first_dp: f64,
    /// −πbe′Δb
    pub first_db: f64,
    /// πe′Δp²/2
    pub second_dp: f64,
    /// −πe′Δb²/2
    pub second_db: f64,
    /// Second-order estimate with e″ neglected.
    pub total: f64,
    /// −πbe″(Δp+Δb)²/2, the second-order term dropped when e″ is neglected.
    pub curvature: f64,
    pub total_with_curvature: f64,
}

/// Second-order approximation of W(p+Δp, b+Δb) − W(p, b).
pub fn taylor_delta(s: &WelfareScenario, dp: f64, db: f64) -> Result<TaylorTerms> {
    let d = welfare_derivatives(s)?;
    let (pi, b, e, e1) = (s.pi, s.b, d.e, d.e_prime);
    let first_dp = pi * (e - b * e1) * dp;
    let first_db = -pi * b * e1 * db;
    let second_dp = pi * e1 / 2.0 * dp * dp;
    let second_db = -pi * e1 / 2.0 * db * db;
    let total = first_dp + first_db + second_dp + second_db;
    let curvature = -pi * b * d.e_double_prime / 2.0 * (dp + db).powi(2);
    Ok(TaylorTerms {
        dp,
        db,
        first_dp,
        first_db,
        second_dp,
        second_db,
        total,
        curvature,
        total_with_curvature: total + curvature,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Result1 {
    /// Effort does not respond to beliefs, so welfare rises in p.
    pub e_prime_zero: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Result2 {
    /// πe
    pub gain: f64,
    /// bπe′
    pub loss: f64,
    /// (ln(π(p+b)), b/(p+b)) under exponential cost.
    pub exponential_form: Option<(f64, f64)>,
    pub welfare_decreasing_in_p: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Result3 {
    pub alpha: f64,
    /// πe
    pub gain: f64,
    /// (1+α)bπe′
    pub loss: f64,
    /// (ln(π(p+b)), (1+α)b/(p+b)) under exponential cost.
    pub exponential_form: Option<(f64, f64)>,
    pub exposure_lowers_welfare: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Result4 {
    /// πb²e′/2, the approximate gain from removing the bias.
    pub delta_w_star: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResultChecks {
    pub result1: Result1,
    pub result2: Result2,
    pub result3: Result3,
    pub result4: Result4,
}

pub fn check_results(s: &WelfareScenario, dp: f64, alpha: f64) -> Result<ResultChecks> {
    if !(dp > 0.0) {
        return Err(Error::InvalidArgument(format!("Δp must be positive, got {dp}")));
    }
    if !(alpha >= 1.0) {
        return Err(Error::InvalidArgument(format!("α must be at least 1, got {alpha}")));
    }
    let d = welfare_derivatives(s)?;
    let (pi, b, q) = (s.pi, s.b, s.belief());
    let gain = pi * d.e;
    let loss2 = b * pi * d.e_prime;
    let loss3 = (1.0 + alpha) * loss2;
    let exp = matches!(s.cost, CostSpec::Exponential { .. });
    let lnq = (pi * q).ln();
    Ok(ResultChecks {
        result1: Result1 {
            e_prime_zero: d.e_prime == 0.0,
        },
        result2: Result2 {
            gain,
            loss: loss2,
            exponential_form: exp.then(|| (lnq, b / q)),
            welfare_decreasing_in_p: gain < loss2,
        },
        result3: Result3 {
            alpha,
            gain,
            loss: loss3,
            exponential_form: exp.then(|| (lnq, (1.0 + alpha) * b / q)),
            exposure_lowers_welfare: gain < loss3,
        },
        result4: Result4 {
            delta_w_star: pi * b * b * d.e_prime / 2.0,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridPoint {
    pub p: f64,
    pub b: f64,
    pub e: f64,
    pub w: f64,
    pub dw_dp: f64,
    pub dw_db: f64,
}

/// Evaluates every (p, b) pair with a valid belief; others are skipped.
pub fn grid(ps: &[f64], bs: &[f64], pi: f64, cost: &CostSpec) -> Result<Vec<GridPoint>> {
    let mut out = Vec::new();
    for &p in ps {
        for &b in bs {
            let Ok(s) = WelfareScenario::new(p, b, pi, cost.clone()) else {
                continue;
            };
            let d = welfare_derivatives(&s)?;
            out.push(GridPoint {
                p,
                b,
                e: d.e,
                w: welfare(&s)?,
                dw_dp: d.dw_dp,
                dw_db: d.dw_db,
            });
        }
    }
    Ok(out)
}

pub fn grid_csv(points: &[GridPoint]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["p", "b", "e", "w", "dw_dp", "dw_db"])?;
    for g in points {
        w.write_record([g.p, g.b, g.e, g.w, g.dw_dp, g.dw_db].map(|v| v.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Plain-text term-by-term report.
pub fn report(s: &WelfareScenario, dp: f64, alpha: f64) -> Result<String> {
    use std::fmt::Write;
    let eff = optimal_effort(s)?;
    let d = welfare_derivatives(s)?;
    let t = taylor_delta(s, dp, alpha * dp)?;
    let r = check_results(s, dp, alpha)?;
    let mut o = String::new();
    let _ = writeln!(o, "scenario: p = {}, b = {}, pi = {}, cost = {}", s.p, s.b, s.pi, s.cost);
    let _ = writeln!(
        o,
        "effort e(p+b) = {:.6}{}",
        eff.e,
        if eff.non_positive { "  [non-positive: pi(p+b) <= 1]" } else { "" }
    );
    let _ = writeln!(o, "e' = {:.6}  e'' = {:.6}", d.e_prime, d.e_double_prime);
    let _ = writeln!(o, "W(p, b) = {:.6}", welfare(s)?);
    let _ = writeln!(o, "dW/dp = {:.6}  dW/db = {:.6}", d.dw_dp, d.dw_db);
    let _ = writeln!(o, "taylor (dp = {}, db = {}):", t.dp, t.db);
    let _ = writeln!(o, "  pi(e - b e') dp     = {:.6}", t.first_dp);
    let _ = writeln!(o, "  pi e'/2 dp^2        = {:.6}", t.second_dp);
    let _ = writeln!(o, "  -pi b e' db         = {:.6}", t.first_db);
    let _ = writeln!(o, "  -pi e'/2 db^2       = {:.6}", t.second_db);
    let _ = writeln!(o, "  total               = {:.6}", t.total);
    let _ = writeln!(o, "  e'' correction      = {:.6}", t.curvature);
    if let Ok(next) = s.with(s.p + t.dp, s.b + t.db) {
        let _ = writeln!(o, "  exact change        = {:.6}", welfare(&next)? - welfare(s)?);
    }
    let _ = writeln!(o, "result 1: e' = 0: {}", r.result1.e_prime_zero);
    let _ = writeln!(
        o,
        "result 2: pi e = {:.6} vs b pi e' = {:.6} -> {}",
        r.result2.gain,
        r.result2.loss,
        if r.result2.welfare_decreasing_in_p { "welfare decreasing in p" } else { "welfare increasing in p" }
    );
    if let Some((l, rhs)) = r.result2.exponential_form {
        let _ = writeln!(o, "          ln(pi(p+b)) = {l:.6} vs b/(p+b) = {rhs:.6}");
    }
    let _ = writeln!(
        o,
        "result 3 (alpha = {}): pi e = {:.6} vs (1+alpha) b pi e' = {:.6} -> {}",
        alpha,
        r.result3.gain,
        r.result3.loss,
        if r.result3.exposure_lowers_welfare { "exposure lowers welfare" } else { "exposure raises welfare" }
    );
    if let Some((l, rhs)) = r.result3.exponential_form {
        let _ = writeln!(o, "          ln(pi(p+b)) = {l:.6} vs (1+alpha) b/(p+b) = {rhs:.6}");
    }
    let _ = writeln!(o, "result 4: gain from removing bias = {:.6}", r.result4.delta_w_star);
    Ok(o)
}
