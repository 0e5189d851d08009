//! Artifact writers: header lines, field files, checkpoints and SVG plots.

use std::fs;
use std::io::{BufReader, Read};
use std::path::Path;

use perishape_core::contour;
use perishape_core::optimizer::Checkpoint;
use perishape_core::{Error, LevelSetField, ScalarField};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// First line of every artifact, without a comment marker.
pub fn header_text(hash: &str) -> String {
    format!("perishape {VERSION} config sha256:{hash}")
}

/// Writes `bytes` through a temporary sibling so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// Text artifact with a `# ` header line.
pub fn write_text(path: &Path, hash: &str, body: &str) -> std::io::Result<()> {
    write_atomic(path, format!("# {}\n{body}", header_text(hash)).as_bytes())
}

/// LSF1 field preceded by a `#` header line.
pub fn write_field(path: &Path, hash: &str, field: &LevelSetField) -> perishape_core::Result<()> {
    let mut buf = format!("# {}\n", header_text(hash)).into_bytes();
    field.write_binary(&mut buf)?;
    Ok(write_atomic(path, &buf)?)
}

/// Drops leading `#` lines, returning the header texts and the remainder.
fn split_headers(bytes: &[u8]) -> (Vec<String>, &[u8]) {
    let mut rest = bytes;
    let mut headers = Vec::new();
    while rest.first() == Some(&b'#') {
        let end = rest.iter().position(|&b| b == b'\n').map_or(rest.len(), |p| p + 1);
        headers.push(String::from_utf8_lossy(&rest[1..end]).trim().to_string());
        rest = &rest[end..];
    }
    (headers, rest)
}

/// Reads a level-set field from LSF1 (header lines allowed) or, for a `.csv`
/// extension, from `x,y,phi` rows.
pub fn read_field(path: &Path) -> perishape_core::Result<LevelSetField> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        return LevelSetField::read_csv(BufReader::new(fs::File::open(path)?));
    }
    let bytes = fs::read(path)?;
    let (_, mut body) = split_headers(&bytes);
    LevelSetField::read_binary(&mut body)
}

/// Checkpoint file: header line, one `checkpoint` line with the scalar
/// state as IEEE bit patterns, then the LSF1 field.
pub fn write_checkpoint(path: &Path, hash: &str, c: &Checkpoint) -> perishape_core::Result<()> {
    let mut buf = format!(
        "# {}\ncheckpoint iteration={} mu={:016x} step={:016x}\n",
        header_text(hash),
        c.iteration,
        c.mu.to_bits(),
        c.step.to_bits()
    )
    .into_bytes();
    c.set.write_binary(&mut buf)?;
    Ok(write_atomic(path, &buf)?)
}

/// Reads a checkpoint; also returns the configuration hash it was written with.
pub fn read_checkpoint(path: &Path) -> perishape_core::Result<(Checkpoint, Option<String>)> {
    let bytes = fs::read(path)?;
    let (headers, rest) = split_headers(&bytes);
    let hash = headers.iter().find_map(|h| h.split("sha256:").nth(1)).map(|s| s.trim().to_string());
    let bad = |m: &str| Error::Format(format!("{}: {m}", path.display()));
    let end = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing checkpoint line"))?;
    let line = std::str::from_utf8(&rest[..end]).map_err(|_| bad("checkpoint line is not text"))?;
    let mut fields = line.split_whitespace();
    if fields.next() != Some("checkpoint") {
        return Err(bad("missing checkpoint line"));
    }
    let (mut iteration, mut mu, mut step) = (None, None, None);
    for f in fields {
        let (k, v) = f.split_once('=').ok_or_else(|| bad("malformed field"))?;
        match k {
            "iteration" => iteration = v.parse::<usize>().ok(),
            "mu" => mu = u64::from_str_radix(v, 16).ok().map(f64::from_bits),
            "step" => step = u64::from_str_radix(v, 16).ok().map(f64::from_bits),
            _ => return Err(bad(&format!("unknown field `{k}`"))),
        }
    }
    let mut body = &rest[end + 1..];
    let set = LevelSetField::read_binary(&mut body)?;
    let mut extra = Vec::new();
    body.read_to_end(&mut extra)?;
    if !extra.is_empty() {
        return Err(bad("trailing bytes after the field"));
    }
    match (iteration, mu, step) {
        (Some(iteration), Some(mu), Some(step)) => Ok((Checkpoint { iteration, mu, step, set }, hash)),
        _ => Err(bad("incomplete checkpoint line")),
    }
}

fn color(t: f64) -> String {
    // Five-stop blue-green-yellow ramp.
    const STOPS: [[f64; 3]; 5] =
        [[68.0, 1.0, 84.0], [59.0, 82.0, 139.0], [33.0, 145.0, 140.0], [94.0, 201.0, 98.0], [253.0, 231.0, 37.0]];
    let t = t.clamp(0.0, 1.0) * 4.0;
    let k = (t.floor() as usize).min(3);
    let f = t - k as f64;
    let c: Vec<u8> = (0..3).map(|i| (STOPS[k][i] + f * (STOPS[k + 1][i] - STOPS[k][i])).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

const MAX_CELLS: usize = 160;

/// SVG of the zero contour over a heatmap of `state` on the nodes of the set
/// (or of `phi` itself when no state is given).
pub fn render_svg(hash: &str, set: &LevelSetField, state: Option<&ScalarField>, title: &str) -> String {
    let g = *set.grid();
    let hi = g.max_corner();
    let (w, hgt) = (hi[0] - g.origin[0], hi[1] - g.origin[1]);
    let values: Vec<f64> = match state {
        Some(s) => s.values().to_vec(),
        None => set.values().to_vec(),
    };
    let inside: Vec<usize> = (0..g.len()).filter(|&i| set.inside(i)).collect();
    let (lo, up) = inside.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &i| (a.min(values[i]), b.max(values[i])));
    let span = if up > lo { up - lo } else { 1.0 };
    let stride = g.nx.max(g.ny).div_ceil(MAX_CELLS).max(1);
    let cell = stride as f64 * g.h;
    let scale = 640.0 / w.max(hgt);
    let mut s = String::new();
    s.push_str(&format!("<!-- {} -->\n", header_text(hash)));
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"{:.6} {:.6} {:.6} {:.6}\">\n",
        w * scale,
        hgt * scale,
        g.origin[0],
        -hi[1],
        w,
        hgt
    ));
    s.push_str(&format!("<title>{title}</title>\n<rect x=\"{:.6}\" y=\"{:.6}\" width=\"{w:.6}\" height=\"{hgt:.6}\" fill=\"white\"/>\n", g.origin[0], -hi[1]));
    s.push_str("<g transform=\"scale(1,-1)\" shape-rendering=\"crispEdges\">\n");
    for j in (0..g.ny).step_by(stride) {
        for i in (0..g.nx).step_by(stride) {
            let idx = g.index(i, j);
            if !set.inside(idx) {
                continue;
            }
            let p = g.point(i, j);
            s.push_str(&format!(
                "<rect x=\"{:.6}\" y=\"{:.6}\" width=\"{cell:.6}\" height=\"{cell:.6}\" fill=\"{}\"/>\n",
                p[0] - cell / 2.0,
                p[1] - cell / 2.0,
                color((values[idx] - lo) / span)
            ));
        }
    }
    s.push_str("</g>\n<g transform=\"scale(1,-1)\" fill=\"none\" stroke=\"black\">\n");
    let c = contour::extract(&g, set.values());
    for chain in &c.chains {
        let pts: Vec<String> = c.chain_points(chain).iter().map(|p| format!("{:.6},{:.6}", p[0], p[1])).collect();
        let tag = if chain.closed { "polygon" } else { "polyline" };
        s.push_str(&format!("<{tag} stroke-width=\"{:.6}\" points=\"{}\"/>\n", 0.75 * g.h, pts.join(" ")));
    }
    s.push_str("</g>\n</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn color_ramp_ends() {
        assert_eq!(color(0.0), "#440154");
        assert_eq!(color(1.0), "#fde725");
        assert_eq!(color(f64::NAN.max(2.0)), "#fde725");
    }

    #[test]
    fn header_lines_are_split_off() {
        let (h, rest) = split_headers(b"# one\n# two\nLSF1");
        assert_eq!(h, ["one", "two"]);
        assert_eq!(rest, b"LSF1");
    }
}
