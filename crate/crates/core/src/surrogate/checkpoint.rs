//! Plain-text parameter checkpoints: a header line, the layer widths, then
//! one parameter per line in shortest round-trip form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use super::{init_net, SurrogateNet};
use crate::error::{Error, Result};
use crate::mesh::PolygonDomain;

const HEADER: &str = "parafem-net v1";

pub fn save_checkpoint(net: &SurrogateNet, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(24 * net.num_params());
    out.push_str(HEADER);
    out.push('\n');
    let dims: Vec<String> = net.dims().iter().map(usize::to_string).collect();
    let _ = writeln!(out, "dims {}", dims.join(" "));
    for p in net.params() {
        let _ = writeln!(out, "{p:?}");
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path, domain: Arc<PolygonDomain>) -> Result<SurrogateNet> {
    let text = fs::read_to_string(path)?;
    let bad = |msg: &str| Error::Network(format!("{}: {msg}", path.display()));
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        return Err(bad("missing checkpoint header"));
    }
    let dims: Vec<usize> = lines
        .next()
        .and_then(|l| l.strip_prefix("dims "))
        .ok_or_else(|| bad("missing dims line"))?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad("bad layer width")))
        .collect::<Result<_>>()?;
    let params: Vec<f64> = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse().map_err(|_| bad("bad parameter value")))
        .collect::<Result<_>>()?;
    let mut net = init_net(&dims, 0, domain)?;
    net.set_params(params)?;
    Ok(net)
}
