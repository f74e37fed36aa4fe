//! Text format: a one-line JSON header followed by one line per site,
//! `x<TAB>1:w 2:w ... R:w`, with every conductance written to 17
//! significant digits.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use super::{Defect, Environment, ModelParams, ModelTag, RawEnvironment};
use crate::error::{LabError, Result};

const FORMAT: &str = "conductance-lab-env/1";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    model_tag: ModelTag,
    window: (i64, i64),
    truncation_radius: usize,
    kappa: f64,
    #[serde(rename = "tail_K")]
    tail_k: f64,
    tail_beta: f64,
    seed: u64,
    tail_mass_bound: f64,
    #[serde(default)]
    params: Option<ModelParams>,
    #[serde(default)]
    defects: Vec<Defect>,
}

pub fn write_environment<W: Write>(env: &Environment, mut out: W) -> Result<()> {
    let (x_min, x_max) = env.window();
    let header = Header {
        format: FORMAT.to_string(),
        model_tag: env.model_tag,
        window: (x_min, x_max),
        truncation_radius: env.truncation_radius(),
        kappa: env.kappa,
        tail_k: env.tail_k,
        tail_beta: env.tail_beta,
        seed: env.seed,
        tail_mass_bound: env.tail_mass_bound,
        params: env.params.clone(),
        defects: env.defects.clone(),
    };
    let json = serde_json::to_string(&header).map_err(|e| LabError::Parse { what: "header", detail: e.to_string() })?;
    writeln!(out, "{json}")?;
    let mut line = String::new();
    for x in x_min..=x_max {
        line.clear();
        write!(line, "{x}\t").unwrap();
        let row = env.forward_row(x);
        let last = (x_max - x).min(row.len() as i64) as usize;
        for (d, w) in row[..last].iter().enumerate() {
            if d > 0 {
                line.push(' ');
            }
            write!(line, "{}:{:.16e}", d + 1, w).unwrap();
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_environment<R: Read>(input: R) -> Result<Environment> {
    let mut lines = BufReader::new(input).lines();
    let first = lines.next().ok_or_else(|| LabError::Parse { what: "environment file", detail: "empty".into() })??;
    let header: Header =
        serde_json::from_str(&first).map_err(|e| LabError::Parse { what: "header", detail: e.to_string() })?;
    if header.format != FORMAT {
        return Err(LabError::Parse { what: "header", detail: format!("unknown format `{}`", header.format) });
    }
    let (x_min, x_max) = header.window;
    let radius = header.truncation_radius;
    if x_max < x_min || radius == 0 {
        return Err(LabError::Parse { what: "header", detail: "empty window or zero radius".into() });
    }
    let n_sites = (x_max - x_min + 1) as usize;
    let mut forward = vec![0.0; n_sites * radius];
    let mut seen = vec![false; n_sites];
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |detail: String| LabError::Parse { what: "site record", detail: format!("line {}: {detail}", lineno + 2) };
        let (site, rest) = line.split_once('\t').ok_or_else(|| bad("missing tab".into()))?;
        let x: i64 = site.trim().parse().map_err(|_| bad(format!("bad site `{site}`")))?;
        if x < x_min || x > x_max {
            return Err(bad(format!("site {x} outside window")));
        }
        let idx = (x - x_min) as usize;
        seen[idx] = true;
        for pair in rest.split_whitespace() {
            let (d, w) = pair.split_once(':').ok_or_else(|| bad(format!("bad pair `{pair}`")))?;
            let d: usize = d.parse().map_err(|_| bad(format!("bad offset `{d}`")))?;
            let w: f64 = w.parse().map_err(|_| bad(format!("bad conductance `{w}`")))?;
            if d == 0 || d > radius || x + d as i64 > x_max {
                return Err(bad(format!("offset {d} out of range")));
            }
            forward[idx * radius + d - 1] = w;
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(LabError::Parse { what: "environment file", detail: format!("no record for site {}", x_min + missing as i64) });
    }
    Ok(Environment::from_raw(RawEnvironment {
        x_min,
        x_max,
        radius,
        forward,
        kappa: header.kappa,
        tail_k: header.tail_k,
        tail_beta: header.tail_beta,
        seed: header.seed,
        model_tag: header.model_tag,
        params: header.params,
        defects: header.defects,
        tail_mass_bound: header.tail_mass_bound,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{generate, EnvironmentSpec};

    #[test]
    fn round_trip_is_bit_exact() {
        let env = generate(&EnvironmentSpec::iid_polynomial(0.5, 2.0, 3.0, (-150, 150), 77)).unwrap();
        let mut buf = Vec::new();
        write_environment(&env, &mut buf).unwrap();
        let back = read_environment(buf.as_slice()).unwrap();
        assert_eq!(back.env_id(), env.env_id());
        assert_eq!(back.window(), env.window());
        assert_eq!(back.tail_mass_bound, env.tail_mass_bound);
        for x in -150..=150 {
            for d in 1..=env.truncation_radius() as i64 {
                assert_eq!(back.conductance(x, x + d).to_bits(), env.conductance(x, x + d).to_bits());
            }
        }
        let mut again = Vec::new();
        write_environment(&back, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_environment("".as_bytes()).is_err());
        assert!(read_environment("{\"format\":\"nope\"}\n".as_bytes()).is_err());
    }
}
