//! Tables (CSV) and plots (SVG) aggregated over per-asset results.

use crate::events::EventType;
use crate::midprice::{JumpDistribution, StylizedStats};
use crate::mm::FillCounts;
use log::warn;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

/// Everything known about one asset; missing pieces leave blanks or skip rows.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AssetResults {
    pub asset: String,
    pub real_counts: Option<[u64; 12]>,
    /// Totals over all simulation runs.
    pub sim_counts: Option<Vec<u64>>,
    pub jumps: Option<JumpDistribution>,
    pub real_stats: Option<StylizedStats>,
    pub sim_stats: Option<StylizedStats>,
    pub ratio_real: Option<f64>,
    pub ratio_sim: Option<f64>,
    pub fills_real: Option<FillCounts>,
    pub fills_sim: Option<FillCounts>,
    pub rewards_real: Option<Vec<f64>>,
    pub rewards_sim: Option<Vec<f64>>,
    /// A few simulated price paths for plotting.
    pub sim_paths: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub seed: u64,
    pub version: String,
    pub config: serde_json::Value,
}

impl Fingerprint {
    pub fn new(seed: u64, config: serde_json::Value) -> Self {
        Self { seed, version: env!("CARGO_PKG_VERSION").to_string(), config }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub assets: BTreeMap<String, AssetResults>,
    /// Every file written, relative to the output directory.
    pub files: BTreeSet<String>,
    pub fingerprint: Fingerprint,
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn header(first: &str, assets: &[&AssetResults]) -> String {
    let mut s = first.to_string();
    for a in assets {
        s.push(',');
        s.push_str(&a.asset);
    }
    s
}

/// Per-type counts with a pooled probability column.
pub fn table1_csv(assets: &[AssetResults]) -> Option<String> {
    let with: Vec<&AssetResults> = assets
        .iter()
        .filter(|a| {
            let ok = a.real_counts.is_some();
            if !ok {
                warn!("no event counts for {}; omitted from the counts table", a.asset);
            }
            ok
        })
        .collect();
    if with.is_empty() {
        return None;
    }
    let grand: u64 = with.iter().flat_map(|a| a.real_counts.unwrap()).sum();
    let mut s = header("event_type", &with) + ",probability\n";
    for t in EventType::ALL {
        let row: Vec<u64> = with.iter().map(|a| a.real_counts.unwrap()[t.index()]).collect();
        let p = row.iter().sum::<u64>() as f64 / grand.max(1) as f64;
        let _ = writeln!(s, "{},{},{p}", t.label(), row.iter().map(u64::to_string).collect::<Vec<_>>().join(","));
    }
    Some(s)
}

/// Simulated per-type totals; `None` (with a warning) when nothing was simulated.
pub fn table3_csv(assets: &[AssetResults]) -> Option<String> {
    let with: Vec<&AssetResults> = assets.iter().filter(|a| a.sim_counts.as_ref().is_some_and(|c| c.len() == 12)).collect();
    if with.is_empty() {
        warn!("no simulation results; simulated counts table omitted");
        return None;
    }
    let mut s = header("event_type", &with) + "\n";
    for t in EventType::ALL {
        let row: Vec<String> = with.iter().map(|a| a.sim_counts.as_ref().unwrap()[t.index()].to_string()).collect();
        let _ = writeln!(s, "{},{}", t.label(), row.join(","));
    }
    Some(s)
}

/// Jump-size counts and stylized statistics, real against simulated.
pub fn table4_csv(assets: &[AssetResults]) -> Option<String> {
    if assets.is_empty() {
        return None;
    }
    let all: Vec<&AssetResults> = assets.iter().collect();
    let mut s = header("statistic", &all) + "\n";
    let mut row = |name: &str, f: &dyn Fn(&AssetResults) -> Option<f64>| {
        let cells: Vec<String> = all.iter().map(|a| opt(f(a))).collect();
        let _ = writeln!(s, "{name},{}", cells.join(","));
    };
    row("jump_sizes", &|a| a.jumps.as_ref().map(|j| j.distinct_sizes() as f64));
    type Pick = fn(&StylizedStats) -> Option<f64>;
    let stats: [(&str, Pick); 4] = [
        ("volatility", |x| Some(x.volatility)),
        ("abs_skewness", |x| x.abs_skewness),
        ("excess_kurtosis", |x| x.excess_kurtosis),
        ("hurst", |x| x.hurst),
    ];
    for (name, pick) in stats {
        row(&format!("{name}_real"), &|a| a.real_stats.as_ref().and_then(pick));
        row(&format!("{name}_sim"), &|a| a.sim_stats.as_ref().and_then(pick));
    }
    Some(s)
}

/// Adverse to non-adverse fill ratios.
pub fn table6_csv(assets: &[AssetResults]) -> Option<String> {
    let with: Vec<&AssetResults> = assets.iter().filter(|a| a.ratio_real.is_some() || a.ratio_sim.is_some()).collect();
    if with.is_empty() {
        warn!("no market-making evaluations; fill ratio table omitted");
        return None;
    }
    let mut s = header("ratio", &with) + "\n";
    let real: Vec<String> = with.iter().map(|a| opt(a.ratio_real)).collect();
    let sim: Vec<String> = with.iter().map(|a| opt(a.ratio_sim)).collect();
    let _ = writeln!(s, "real,{}", real.join(","));
    let _ = writeln!(s, "sim,{}", sim.join(","));
    Some(s)
}

const W: f64 = 640.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;

fn svg_open(w: f64, h: f64, title: &str) -> String {
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    );
    let _ = writeln!(s, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    let _ = writeln!(s, "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>", w / 2.0, escape(title));
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(s: &mut String, x0: f64, y0: f64, w: f64, h: f64) {
    let _ = writeln!(
        s,
        "<path d=\"M{x0:.2} {y0:.2} V{:.2} H{:.2}\" stroke=\"black\" fill=\"none\"/>",
        y0 + h,
        x0 + w
    );
}

fn note(s: &mut String, x: f64, y: f64, text: &str) {
    let _ = writeln!(s, "<text x=\"{x:.2}\" y=\"{y:.2}\" text-anchor=\"middle\" fill=\"gray\">{}</text>", escape(text));
}

fn range(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    }
}

/// Equal-width histogram counts over the data range.
pub fn histogram_counts(values: &[f64], bins: usize) -> (f64, f64, Vec<usize>) {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() || bins == 0 {
        return (0.0, 0.0, vec![0; bins]);
    }
    let (lo, hi) = range(&finite);
    let mut counts = vec![0; bins];
    for v in finite {
        let k = (((v - lo) / (hi - lo)) * bins as f64).floor() as usize;
        counts[k.min(bins - 1)] += 1;
    }
    (lo, hi, counts)
}

pub fn histogram_svg(title: &str, values: &[f64], bins: usize) -> String {
    let mut s = svg_open(W, H, title);
    let (pw, ph) = (W - 2.0 * PAD, H - 2.0 * PAD);
    axes(&mut s, PAD, PAD, pw, ph);
    let (lo, hi, counts) = histogram_counts(values, bins);
    let top = counts.iter().copied().max().unwrap_or(0);
    if top == 0 {
        note(&mut s, W / 2.0, H / 2.0, "no data");
    } else {
        let bw = pw / bins as f64;
        for (k, &c) in counts.iter().enumerate() {
            let h = ph * c as f64 / top as f64;
            let _ = writeln!(
                s,
                "<rect class=\"bin\" x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{h:.2}\" fill=\"steelblue\" stroke=\"white\"/>",
                PAD + k as f64 * bw,
                PAD + ph - h,
                bw
            );
        }
        let _ = writeln!(s, "<text x=\"{PAD}\" y=\"{:.2}\">{lo:.4}</text>", H - PAD + 16.0);
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{hi:.4}</text>", W - PAD, H - PAD + 16.0);
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{top}</text>", PAD - 4.0, PAD + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

/// One stacked panel per series.
pub fn line_panels_svg(title: &str, series: &[Vec<f64>]) -> String {
    let n = series.len().max(1);
    let ph = 140.0;
    let h = 32.0 + n as f64 * (ph + 24.0);
    let mut s = svg_open(W, h, title);
    let pw = W - 2.0 * PAD;
    if series.is_empty() {
        axes(&mut s, PAD, 32.0, pw, ph);
        note(&mut s, W / 2.0, 32.0 + ph / 2.0, "no data");
    }
    for (k, ys) in series.iter().enumerate() {
        let y0 = 32.0 + k as f64 * (ph + 24.0);
        axes(&mut s, PAD, y0, pw, ph);
        if ys.len() < 2 {
            note(&mut s, W / 2.0, y0 + ph / 2.0, "no data");
            continue;
        }
        let (lo, hi) = range(ys);
        let mut d = String::new();
        for (i, y) in ys.iter().enumerate() {
            let px = PAD + pw * i as f64 / (ys.len() - 1) as f64;
            let py = y0 + ph - ph * (y - lo) / (hi - lo);
            let _ = write!(d, "{}{px:.2} {py:.2}", if i == 0 { "M" } else { " L" });
        }
        let _ = writeln!(s, "<path class=\"series\" d=\"{d}\" stroke=\"steelblue\" fill=\"none\"/>");
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{hi:.4}</text>", PAD - 4.0, y0 + 8.0);
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{lo:.4}</text>", PAD - 4.0, y0 + ph);
    }
    s.push_str("</svg>\n");
    s
}

pub fn bar_svg(title: &str, bars: &[(String, f64)]) -> String {
    let mut s = svg_open(W, H, title);
    let (pw, ph) = (W - 2.0 * PAD, H - 2.0 * PAD);
    axes(&mut s, PAD, PAD, pw, ph);
    let top = bars.iter().map(|b| b.1).fold(0.0, f64::max);
    if bars.is_empty() || top <= 0.0 {
        note(&mut s, W / 2.0, H / 2.0, "no data");
    } else {
        let slot = pw / bars.len() as f64;
        for (k, (label, v)) in bars.iter().enumerate() {
            let h = ph * v / top;
            let x = PAD + k as f64 * slot;
            let _ = writeln!(
                s,
                "<rect class=\"bar\" x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{h:.2}\" fill=\"steelblue\"/>",
                x + 0.1 * slot,
                PAD + ph - h,
                0.8 * slot
            );
            let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>", x + slot / 2.0, H - PAD + 16.0, escape(label));
            let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{v}</text>", x + slot / 2.0, PAD + ph - h - 4.0);
        }
    }
    s.push_str("</svg>\n");
    s
}

fn jump_bars(j: &JumpDistribution) -> Vec<(String, f64)> {
    let mut bars = Vec::new();
    for (tag, t) in [("+", &j.up), ("-", &j.down)] {
        for (size, p) in t.sizes().iter().zip(t.probs()) {
            bars.push((format!("{tag}{size}"), *p));
        }
    }
    bars
}

/// Write every table and plot derivable from `assets` into `out`, plus
/// `manifest.json` describing the bundle.
pub fn emit(assets: &[AssetResults], fingerprint: Fingerprint, out: &Path) -> std::io::Result<ReportBundle> {
    std::fs::create_dir_all(out)?;
    let mut files = BTreeSet::new();
    let mut put = |name: String, body: String| -> std::io::Result<()> {
        std::fs::write(out.join(&name), body)?;
        files.insert(name);
        Ok(())
    };
    let tables: [(&str, Option<String>); 4] = [
        ("table1_event_counts.csv", table1_csv(assets)),
        ("table3_simulated_counts.csv", table3_csv(assets)),
        ("table4_stylized_stats.csv", table4_csv(assets)),
        ("table6_fill_ratio.csv", table6_csv(assets)),
    ];
    for (name, body) in tables {
        if let Some(b) = body {
            put(name.to_string(), b)?;
        }
    }
    for a in assets {
        let n = &a.asset;
        if let Some(j) = &a.jumps {
            put(format!("{n}_jump_sizes.svg"), bar_svg(&format!("{n} jump size distribution"), &jump_bars(j)))?;
        }
        if !a.sim_paths.is_empty() {
            put(format!("{n}_price_paths.svg"), line_panels_svg(&format!("{n} simulated midprice paths"), &a.sim_paths))?;
        }
        for (tag, rewards, fills) in [("sim", &a.rewards_sim, &a.fills_sim), ("real", &a.rewards_real, &a.fills_real)] {
            if let Some(r) = rewards {
                put(format!("{n}_rewards_{tag}.svg"), histogram_svg(&format!("{n} terminal reward ({tag})"), r, 20))?;
            }
            if let Some(f) = fills {
                let bars = f.labelled().iter().map(|(l, c)| (l.to_string(), *c as f64)).collect::<Vec<_>>();
                put(format!("{n}_fills_{tag}.svg"), bar_svg(&format!("{n} fills by market order type ({tag})"), &bars))?;
            }
        }
    }
    let bundle = ReportBundle {
        assets: assets.iter().map(|a| (a.asset.clone(), a.clone())).collect(),
        files,
        fingerprint,
    };
    let manifest = out.join("manifest.json");
    std::fs::write(&manifest, serde_json::to_string_pretty(&bundle).expect("serializes"))?;
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::DAY_COUNTS;

    fn day_assets() -> Vec<AssetResults> {
        DAY_COUNTS
            .iter()
            .map(|(n, c)| AssetResults { asset: n.to_string(), real_counts: Some(*c), ..Default::default() })
            .collect()
    }

    #[test]
    fn counts_table_has_twelve_rows_and_pooled_probabilities() {
        let t = table1_csv(&day_assets()).unwrap();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 13);
        assert_eq!(lines[0], "event_type,AAPL,AMZN,GOOG,INTC,MSFT,probability");
        let probs: Vec<f64> = lines[1..].iter().map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // LS0 row of the reference day.
        assert!((probs[7] - 0.23577).abs() < 5e-6);
        assert!(lines[8].starts_with("LS0,91021,61588,"));
    }

    #[test]
    fn empty_simulation_set_omits_the_table() {
        assert_eq!(table3_csv(&day_assets()), None);
    }

    #[test]
    fn reward_histogram_has_twenty_bins() {
        let r: Vec<f64> = (0..100).map(|k| (k as f64 * 0.7).sin()).collect();
        let svg = histogram_svg("rewards", &r, 20);
        assert_eq!(svg.matches("class=\"bin\"").count(), 20);
        let (_, _, counts) = histogram_counts(&r, 20);
        assert_eq!(counts.iter().sum::<usize>(), 100);
    }

    #[test]
    fn five_paths_make_five_panels() {
        let paths: Vec<Vec<f64>> = (0..5).map(|k| (0..50).map(|i| (i * k) as f64).collect()).collect();
        assert_eq!(line_panels_svg("paths", &paths).matches("class=\"series\"").count(), 5);
    }

    #[test]
    fn fill_bars_per_market_order_type() {
        let f = FillCounts { mb_up: 30, ms_down: 28, mb_flat: 5, ms_flat: 4 };
        let bars: Vec<(String, f64)> = f.labelled().iter().map(|(l, c)| (l.to_string(), *c as f64)).collect();
        assert_eq!(bar_svg("fills", &bars).matches("class=\"bar\"").count(), 4);
        assert!(bar_svg("none", &[]).contains("no data"));
    }

    #[test]
    fn rerun_is_byte_identical() {
        let mut assets = day_assets();
        assets[0].sim_counts = Some(vec![3; 12]);
        assets[0].ratio_sim = Some(3.0);
        assets[0].rewards_sim = Some(vec![-1.0, 0.5, 2.0]);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let fp = Fingerprint::new(7, serde_json::json!({"seed": 7}));
        let ba = emit(&assets, fp.clone(), a.path()).unwrap();
        emit(&assets, fp, b.path()).unwrap();
        for name in ba.files.iter().chain(["manifest.json".to_string()].iter()) {
            assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name}");
        }
        assert!(ba.files.contains("table6_fill_ratio.csv"));
    }
}
