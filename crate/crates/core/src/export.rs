//! File formats: RDMX complex arrays, CSV tables, SVG pattern plots and PNG heatmaps.
//!
//! RDMX layout: `b"RDMX"`, u32 version, u32 rank, rank × u64 dims, then
//! little-endian f32 pairs (re, im) in row-major order.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayD, IxDyn};
use num_complex::{Complex32, Complex64};

use crate::error::{Error, Result};
use crate::rdproc::{BinaryMatrix, RangeDopplerMap};
use crate::tbdesign::Beampattern;

pub const RDMX_MAGIC: &[u8; 4] = b"RDMX";
pub const RDMX_VERSION: u32 = 1;

/// Header row of range-Doppler CSV files.
pub const MAP_CSV_HEADER: &str = "range_m,doppler_norm,value_db";

/// Floor applied before taking logarithms of powers.
const POWER_FLOOR: f64 = 1e-30;

/// Serializes a complex array of any rank.
pub fn encode_rdmx(array: &ArrayD<Complex32>) -> Vec<u8> {
    let shape = array.shape();
    let mut out = Vec::with_capacity(12 + 8 * shape.len() + 8 * array.len());
    out.extend_from_slice(RDMX_MAGIC);
    out.extend_from_slice(&RDMX_VERSION.to_le_bytes());
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for z in array.iter() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, n: usize) -> std::result::Result<&'a [u8], String> {
    let end = at.checked_add(n).filter(|&e| e <= bytes.len()).ok_or("truncated data")?;
    let s = &bytes[*at..end];
    *at = end;
    Ok(s)
}

fn parse_rdmx(bytes: &[u8]) -> std::result::Result<ArrayD<Complex32>, String> {
    let mut at = 0;
    if take(bytes, &mut at, 4)? != RDMX_MAGIC {
        return Err("bad magic, expected RDMX".into());
    }
    let u32_at = |at: &mut usize| -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(take(bytes, at, 4)?.try_into().unwrap()))
    };
    let version = u32_at(&mut at)?;
    if version != RDMX_VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let rank = u32_at(&mut at)? as usize;
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        let d = u64::from_le_bytes(take(bytes, &mut at, 8)?.try_into().unwrap());
        dims.push(usize::try_from(d).map_err(|_| "dimension overflows usize")?);
    }
    let count = dims
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or("element count overflows")?;
    let body = &bytes[at..];
    if count.checked_mul(8) != Some(body.len()) {
        return Err(format!(
            "payload has {} bytes, dims {dims:?} need {}",
            body.len(),
            count.saturating_mul(8)
        ));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| {
            Complex32::new(
                f32::from_le_bytes(c[..4].try_into().unwrap()),
                f32::from_le_bytes(c[4..].try_into().unwrap()),
            )
        })
        .collect();
    ArrayD::from_shape_vec(IxDyn(&dims), data).map_err(|e| e.to_string())
}

/// Parses RDMX bytes; `origin` names the source in errors.
pub fn decode_rdmx(bytes: &[u8], origin: &Path) -> Result<ArrayD<Complex32>> {
    parse_rdmx(bytes).map_err(|reason| Error::Format {
        path: origin.to_path_buf(),
        reason,
    })
}

pub fn write_rdmx(path: &Path, array: &ArrayD<Complex32>) -> Result<()> {
    write_bytes(path, &encode_rdmx(array))
}

pub fn read_rdmx(path: &Path) -> Result<ArrayD<Complex32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_rdmx(&bytes, path)
}

/// Narrows a double-precision array to the on-disk precision.
pub fn to_single<D: ndarray::Dimension>(a: &ndarray::Array<Complex64, D>) -> ArrayD<Complex32> {
    a.mapv(|z| Complex32::new(z.re as f32, z.im as f32)).into_dyn()
}

pub fn to_double(a: &ArrayD<Complex32>) -> ArrayD<Complex64> {
    a.mapv(|z| Complex64::new(z.re as f64, z.im as f64))
}

/// Binary mask as a real 0/1 array.
pub fn binary_to_array(g: &BinaryMatrix) -> ArrayD<Complex32> {
    g.data
        .mapv(|b| Complex32::new(if b { 1.0 } else { 0.0 }, 0.0))
        .into_dyn()
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn to_db(power: f64) -> f64 {
    10.0 * power.max(POWER_FLOOR).log10()
}

/// Σ_n |Z_n|² over receivers.
pub fn combined_power(maps: &[RangeDopplerMap]) -> Result<Array2<f64>> {
    let first = maps
        .first()
        .ok_or_else(|| Error::param("maps", "at least one map is required"))?;
    let mut acc = Array2::<f64>::zeros(first.data.dim());
    for m in maps {
        if m.data.dim() != acc.dim() {
            return Err(Error::DimensionMismatch("maps differ in shape".into()));
        }
        acc.zip_mut_with(&m.data, |a, z| *a += z.norm_sqr());
    }
    Ok(acc)
}

/// Long-format CSV of a power map in dB, one line per cell.
pub fn map_csv(power: &Array2<f64>, range_axis_m: &[f64], doppler_axis: &[f64]) -> Result<String> {
    let (np, nq) = power.dim();
    if range_axis_m.len() != np || doppler_axis.len() != nq {
        return Err(Error::DimensionMismatch(format!(
            "axes {}×{} for a {np}×{nq} map",
            range_axis_m.len(),
            doppler_axis.len()
        )));
    }
    let mut s = String::with_capacity(32 * np * nq + 32);
    s.push_str(MAP_CSV_HEADER);
    s.push('\n');
    for ((p, c), &v) in power.indexed_iter() {
        let _ = writeln!(s, "{:.6},{:.9},{:.4}", range_axis_m[p], doppler_axis[c], to_db(v));
    }
    Ok(s)
}

pub fn write_map_csv(path: &Path, maps: &[RangeDopplerMap]) -> Result<()> {
    let power = combined_power(maps)?;
    let csv = map_csv(&power, &maps[0].range_axis_m, &maps[0].doppler_axis)?;
    write_bytes(path, csv.as_bytes())
}

/// Named series sharing one x axis, written as CSV columns.
pub fn series_csv(x_name: &str, x: &[f64], series: &[(&str, &[f64])]) -> Result<String> {
    if series.iter().any(|(_, v)| v.len() != x.len()) {
        return Err(Error::DimensionMismatch("series length differs from axis".into()));
    }
    let mut s = String::new();
    s.push_str(x_name);
    for (name, _) in series {
        s.push(',');
        s.push_str(name);
    }
    s.push('\n');
    for (i, xv) in x.iter().enumerate() {
        let _ = write!(s, "{xv:.9}");
        for (_, v) in series {
            let _ = write!(s, ",{:.6}", v[i]);
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn write_pattern_csv(path: &Path, pattern: &Beampattern) -> Result<()> {
    let db = pattern.values_db();
    let csv = series_csv("sin_theta", &pattern.sin_grid, &[("value_db", &db)])?;
    write_bytes(path, csv.as_bytes())
}

/// SVG line plot of one or more patterns, sin θ against dB.
pub fn pattern_svg(title: &str, curves: &[(&str, &Beampattern)], floor_db: f64) -> Result<String> {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const L: f64 = 60.0;
    const R: f64 = 20.0;
    const T: f64 = 30.0;
    const B: f64 = 50.0;
    const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    if curves.is_empty() {
        return Err(Error::param("curves", "nothing to plot"));
    }
    let top = curves
        .iter()
        .flat_map(|(_, p)| p.values_db())
        .fold(f64::NEG_INFINITY, f64::max);
    let top = (top / 10.0).ceil() * 10.0;
    let bottom = floor_db.min(top - 10.0);
    let x = |s: f64| L + (s + 1.0) / 2.0 * (W - L - R);
    let y = |db: f64| T + (top - db.max(bottom)) / (top - bottom) * (H - T - B);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle">{}</text>"#, W / 2.0, xml_escape(title));
    for i in 0..=8 {
        let sv = -1.0 + 0.25 * i as f64;
        let px = x(sv);
        let _ = writeln!(
            s,
            r##"<line x1="{px:.2}" y1="{T}" x2="{px:.2}" y2="{:.2}" stroke="#ddd"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{sv:.2}</text>"##,
            H - B,
            H - B + 16.0
        );
    }
    let mut db = top;
    while db >= bottom - 1e-9 {
        let py = y(db);
        let _ = writeln!(
            s,
            r##"<line x1="{L}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{db:.0}</text>"##,
            W - R,
            L - 6.0,
            py + 4.0
        );
        db -= 10.0;
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">sin θ</text>"#,
        (L + W - R) / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">pattern (dB)</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (i, (name, p)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = p
            .sin_grid
            .iter()
            .zip(p.values_db())
            .map(|(&sv, v)| format!("{:.2},{:.2}", x(sv), y(v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = T + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            W - R - 150.0,
            W - R - 130.0,
            W - R - 124.0,
            ly + 4.0,
            xml_escape(name)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Heatmap of a power map in dB: rows top to bottom are increasing range,
/// columns follow the Doppler axis; `dynamic_db` below the peak maps to black.
pub fn heatmap_png(path: &Path, power: &Array2<f64>, dynamic_db: f64) -> Result<()> {
    let (np, nq) = power.dim();
    if np == 0 || nq == 0 {
        return Err(Error::param("power", "empty map"));
    }
    let db = power.mapv(to_db);
    let peak = db.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = dynamic_db.abs().max(1.0);
    let mut img = image::RgbImage::new(nq as u32, np as u32);
    for ((p, c), &v) in db.indexed_iter() {
        let t = ((v - (peak - span)) / span).clamp(0.0, 1.0);
        img.put_pixel(c as u32, p as u32, image::Rgb(heat(t)));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    img.write_to(&mut w, image::ImageFormat::Png)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Black, red, yellow, white ramp.
fn heat(t: f64) -> [u8; 3] {
    let ch = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
    [ch(3.0 * t), ch(3.0 * t - 1.0), ch(3.0 * t - 2.0)]
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Numerical(format!("cannot serialize {}: {e}", path.display())))?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}
