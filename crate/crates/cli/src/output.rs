//! File formats: CSV series, the SVG plot, binary noise paths and per-slot
//! record files.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use banditq_core::env::NoiseTrajectory;
use banditq_core::sim::{sample_series, PolicyResult, RunRecord};
use banditq_core::verify::SlotTrace;

/// File-name form of a policy label: `SoftMW+-0.5` becomes `softmw-plus-0-5`.
pub fn slug(label: &str) -> String {
    let mut out = String::new();
    for c in label.chars() {
        match c {
            c if c.is_ascii_alphanumeric() => out.push(c.to_ascii_lowercase()),
            '+' => out.push_str("-plus"),
            _ => out.push('-'),
        }
    }
    out
}

/// `t, mean_total_q, total_q_rep1, ...` on every `stride`-th slot.
pub fn series_csv(result: &PolicyResult) -> String {
    let mut s = String::from("t,mean_total_q");
    for r in 1..=result.reps() {
        let _ = write!(s, ",total_q_rep{r}");
    }
    s.push('\n');
    let mean = result.sampled_mean();
    for (row, m) in mean.iter().enumerate() {
        let _ = write!(s, "{},{}", (row + 1) * result.stride, m);
        for rep in &result.rep_series {
            let _ = write!(s, ",{}", rep[row]);
        }
        s.push('\n');
    }
    s
}

/// Running time average `(1/t) sum_{s<=t} |Q_s|_1` of the mean series.
pub fn time_average_csv(result: &PolicyResult) -> String {
    let mut s = String::from("t,mean_time_avg_total_q\n");
    let mut acc = 0.0;
    for (i, q) in result.mean_series.iter().enumerate() {
        acc += q;
        let t = i + 1;
        if t % result.stride == 0 {
            let _ = writeln!(s, "{},{}", t, acc / t as f64);
        }
    }
    s
}

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 540.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const MAX_POINTS: usize = 2000;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

/// Six significant digits, trailing zeros dropped.
pub fn format_sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_finite() { "0".into() } else { format!("{v}") };
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    let mut s = format!("{:.*}", decimals, v);
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

fn nice_step(range: f64, target: usize) -> f64 {
    let raw = range / target as f64;
    let base = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0].into_iter().map(|m| m * base).find(|s| *s >= raw).unwrap_or(10.0 * base)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Line plot of the mean `|Q_t|_1` per policy.
pub fn emit_plot(title: &str, results: &[PolicyResult]) -> Result<String> {
    if results.is_empty() {
        bail!("nothing to plot: no policies");
    }
    let horizon = results.iter().map(|r| r.mean_series.len()).max().unwrap_or(0).max(1);
    let y_max = results.iter().flat_map(|r| r.mean_series.iter().copied()).fold(0.0, f64::max);
    let y_top = if y_max > 0.0 { y_max * 1.05 } else { 1.0 };
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |t: f64| LEFT + plot_w * t / horizon as f64;
    let py = |q: f64| TOP + plot_h * (1.0 - q / y_top);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );

    let x_step = nice_step(horizon as f64, 5);
    for x in (0..).map(|k| k as f64 * x_step).take_while(|x| *x <= horizon as f64 + 1e-9) {
        let _ = writeln!(
            s,
            r#"<line x1="{0:.2}" y1="{1}" x2="{0:.2}" y2="{2}" stroke="black"/><text x="{0:.2}" y="{3}" font-family="sans-serif" font-size="12" text-anchor="middle">{4}</text>"#,
            px(x),
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 20.0,
            format_sig6(x)
        );
    }
    let y_step = nice_step(y_top, 5);
    for y in (0..).map(|k| k as f64 * y_step).take_while(|y| *y <= y_top + 1e-12) {
        let _ = writeln!(
            s,
            r#"<line x1="{0}" y1="{1:.2}" x2="{2}" y2="{1:.2}" stroke="black"/><text x="{3}" y="{4:.2}" font-family="sans-serif" font-size="12" text-anchor="end">{5}</text>"#,
            LEFT - 5.0,
            py(y),
            LEFT,
            LEFT - 8.0,
            py(y) + 4.0,
            format_sig6(y)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">t</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{0}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 20 {0})">total queue length</text>"#,
        TOP + plot_h / 2.0
    );

    for (i, r) in results.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let n = r.mean_series.len();
        let stride = n.div_ceil(MAX_POINTS).max(1);
        let points: Vec<String> = sample_series(&r.mean_series, stride)
            .into_iter()
            .enumerate()
            .map(|(k, q)| format!("{:.2},{:.2}", px(((k + 1) * stride) as f64), py(q)))
            .collect();
        let points = points.join(" ");
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{points}"/>"#
        );
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/><text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            lx + 25.0,
            lx + 32.0,
            ly + 4.0,
            escape(&r.label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Flat little-endian `f64`, row-major `[t][i]`.
pub fn write_noise_file(path: &Path, trajectory: &NoiseTrajectory) -> Result<()> {
    let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for v in trajectory.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))
}

pub fn read_noise_file(path: &Path, queues: usize) -> Result<NoiseTrajectory> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .with_context(|| format!("reading {}", path.display()))?;
    if bytes.len() % 8 != 0 {
        bail!("{}: length {} is not a multiple of 8", path.display(), bytes.len());
    }
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    NoiseTrajectory::from_values(queues, values)
        .with_context(|| format!("{}: value count is not a multiple of {queues}", path.display()))
}

const RECORD_MAGIC: &str = "# banditq-record";

/// Per-slot trace as CSV: a metadata comment, then
/// `t, action, service, gamma, fed, a1..aK, q1..qK` with 1-based actions.
pub fn write_record(path: &Path, record: &RunRecord) -> Result<()> {
    let trace = record
        .slot_trace()
        .context("record lacks per-slot data; run with per-slot recording at queue stride 1")?;
    let k = trace.queues;
    let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{RECORD_MAGIC} K={} M={} seed={} label={}", k, trace.bound, record.seed, record.label)?;
    let mut header = String::from("t,action,service,gamma,fed");
    for i in 1..=k {
        let _ = write!(header, ",a{i}");
    }
    for i in 1..=k {
        let _ = write!(header, ",q{i}");
    }
    writeln!(w, "{header}")?;
    for t in 1..=trace.len() {
        let opt = |v: &Vec<f64>| v.get(t - 1).map(|x| x.to_string()).unwrap_or_default();
        let mut line = format!(
            "{},{},{},{},{}",
            t,
            trace.actions[t - 1] + 1,
            trace.services[t - 1],
            opt(&record.gammas),
            opt(&record.fed)
        );
        for v in &trace.arrivals[(t - 1) * k..t * k] {
            let _ = write!(line, ",{v}");
        }
        for v in &trace.queue_lengths[(t - 1) * k..t * k] {
            let _ = write!(line, ",{v}");
        }
        writeln!(w, "{line}")?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))
}

pub fn read_record(path: &Path) -> Result<SlotTrace> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut lines = BufReader::new(file).lines();
    let meta = lines.next().context("empty record file")??;
    let rest = meta.strip_prefix(RECORD_MAGIC).with_context(|| format!("{}: not a record file", path.display()))?;
    let mut queues = None;
    let mut bound = None;
    for field in rest.split_whitespace() {
        if let Some(v) = field.strip_prefix("K=") {
            queues = Some(v.parse::<usize>().context("bad K")?);
        } else if let Some(v) = field.strip_prefix("M=") {
            bound = Some(v.parse::<f64>().context("bad M")?);
        }
    }
    let (queues, bound) = match (queues, bound) {
        (Some(k), Some(m)) if k > 0 => (k, m),
        _ => bail!("{}: metadata line needs K and M", path.display()),
    };
    lines.next().context("missing header")??;
    let mut trace = SlotTrace {
        queues,
        bound,
        actions: Vec::new(),
        services: Vec::new(),
        arrivals: Vec::new(),
        queue_lengths: Vec::new(),
    };
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        let row = n + 3;
        if cols.len() != 5 + 2 * queues {
            bail!("{}:{row}: expected {} columns, found {}", path.display(), 5 + 2 * queues, cols.len());
        }
        let num = |s: &str| s.parse::<f64>().with_context(|| format!("{}:{row}: bad number `{s}`", path.display()));
        let action: usize = cols[1].parse().with_context(|| format!("{}:{row}: bad action", path.display()))?;
        if action == 0 || action > queues {
            bail!("{}:{row}: action {action} out of range", path.display());
        }
        trace.actions.push(action - 1);
        trace.services.push(num(cols[2])?);
        for c in &cols[5..5 + queues] {
            trace.arrivals.push(num(c)?);
        }
        for c in &cols[5 + queues..] {
            trace.queue_lengths.push(num(c)?);
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs() {
        assert_eq!(slug("SoftMW+-0.5"), "softmw-plus-0-5");
        assert_eq!(slug("MaxWeightGT"), "maxweightgt");
    }

    #[test]
    fn sig6() {
        assert_eq!(format_sig6(0.0), "0");
        assert_eq!(format_sig6(2000000.0), "2000000");
        assert_eq!(format_sig6(0.5), "0.5");
        assert_eq!(format_sig6(1234.5678), "1234.57");
        assert_eq!(format_sig6(0.000123456789), "0.000123457");
    }

    #[test]
    fn nice_steps() {
        assert_eq!(nice_step(100.0, 5), 20.0);
        assert_eq!(nice_step(2e6, 5), 5e5);
        assert_eq!(nice_step(7.0, 5), 2.0);
    }
}
