//! Sweep table rendering. All numeric text uses `{:.8e}` (nine significant
//! digits, locale-free) so repeated runs emit byte-identical files.

use finikey::rates::RatePoint;
use serde::Serialize;

/// One sweep result, already reduced to plain numbers.
#[derive(Clone, Serialize)]
pub struct Row {
    pub protocol: &'static str,
    pub attack: &'static str,
    #[serde(rename = "N")]
    pub n: f64,
    pub qber: f64,
    pub m_opt: f64,
    pub eps_pe: f64,
    pub eps_ec: f64,
    pub eps_pa: f64,
    pub eps_bar: f64,
    pub rate: f64,
}

impl Row {
    pub fn from_point(p: &RatePoint<f64>) -> Self {
        Row {
            protocol: p.protocol.kind().token(),
            attack: p.attack_model.token(),
            n: p.n_total,
            qber: p.qber,
            m_opt: p.m,
            eps_pe: p.budget.eps_pe,
            eps_ec: p.budget.eps_ec,
            eps_pa: p.budget.eps_pa,
            eps_bar: p.budget.eps_bar,
            rate: clamp_rate(p.reported()),
        }
    }
}

/// Emitted rates are clamped into [0, 1].
pub fn clamp_rate(r: f64) -> f64 {
    r.clamp(0.0, 1.0)
}

pub fn render_csv(rows: &[Row]) -> String {
    let mut out = String::from("protocol,attack,N,qber,m_opt,eps_pe,eps_ec,eps_pa,eps_bar,rate\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}\n",
            r.protocol, r.attack, r.n, r.qber, r.m_opt, r.eps_pe, r.eps_ec, r.eps_pa, r.eps_bar,
            r.rate
        ));
    }
    out
}

pub fn render_json(rows: &[Row]) -> String {
    let mut s = serde_json::to_string_pretty(rows).expect("plain numeric rows serialize");
    s.push('\n');
    s
}

/// One block per (attack, qber) in row order, blocks separated by two blank
/// lines so gnuplot's `index` addresses them.
pub fn render_gnuplot(rows: &[Row]) -> String {
    let mut out = String::new();
    let mut current: Option<(&str, f64)> = None;
    for r in rows {
        let key = (r.attack, r.qber);
        if current != Some(key) {
            if current.is_some() {
                out.push_str("\n\n");
            }
            out.push_str(&format!(
                "# protocol={} attack={} qber={:.8e}\n# N rate\n",
                r.protocol, r.attack, r.qber
            ));
            current = Some(key);
        }
        out.push_str(&format!("{:.8e} {:.8e}\n", r.n, r.rate));
    }
    out
}
