use std::io::{self, Write};

use super::AugmentedPath;
use crate::scalar::Real;

/// `{stem}_seed{seed}.csv`.
pub fn path_bundle_filename(stem: &str, seed: u64) -> String {
    format!("{stem}_seed{seed}.csv")
}

/// Writes paths one after another under a single header
/// `step,time,x1..xd,M,Y`; `step` restarts at 0 for each path.
pub fn write_paths_csv<S: Real, W: Write>(paths: &[AugmentedPath<S>], mut out: W) -> io::Result<()> {
    let d = paths.first().map_or(1, |p| p.d);
    let mut header = String::from("step,time");
    for j in 1..=d {
        header.push_str(&format!(",x{j}"));
    }
    header.push_str(",M,Y");
    writeln!(out, "{header}")?;
    for p in paths {
        for i in 0..=p.steps() {
            write!(out, "{i},{}", p.grid.time(i))?;
            for v in p.x_at(i) {
                write!(out, ",{v}")?;
            }
            writeln!(out, ",{},{}", p.m[i], p.y[i])?;
        }
    }
    Ok(())
}
