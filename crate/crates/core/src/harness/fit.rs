//! Least-squares convergence orders.

/// Fewest levels an order is fitted from.
pub const MIN_LEVELS: usize = 3;
/// Fits with a worse coefficient of determination are refused.
pub const MIN_R2: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub struct OrderFit {
    pub quantity: String,
    /// Slope of `log e` against `log h`; `None` when refused.
    pub order: Option<f64>,
    pub r2: f64,
    pub levels: usize,
    pub refusal: Option<String>,
}

/// Fits `e ≈ C h^p`. Refuses with fewer than [`MIN_LEVELS`] levels, with
/// nonpositive errors, or when `R² < MIN_R2`.
pub fn fit_order(h: &[f64], e: &[f64]) -> OrderFit {
    let levels = h.len().min(e.len());
    let mut fit = OrderFit {
        quantity: String::new(),
        order: None,
        r2: f64::NAN,
        levels,
        refusal: None,
    };
    if levels < MIN_LEVELS {
        fit.refusal = Some(format!("only {levels} levels"));
        return fit;
    }
    if h[..levels].iter().chain(&e[..levels]).any(|v| !(*v > 0.0) || !v.is_finite()) {
        fit.refusal = Some("nonpositive or nonfinite values".into());
        return fit;
    }
    let xs: Vec<f64> = h[..levels].iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = e[..levels].iter().map(|v| v.ln()).collect();
    let m = levels as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        fit.refusal = Some("all spacings equal".into());
        return fit;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    fit.r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    if fit.r2 < MIN_R2 {
        fit.refusal = Some(format!("R^2 = {:.4} below {MIN_R2}", fit.r2));
        return fit;
    }
    fit.order = Some(slope);
    fit
}
