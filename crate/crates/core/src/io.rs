//! Plain-text and image exports of grid fields: CSV with `ny` rows of `nx`
//! values and binary PGM (P5, maxval 255).

use std::fs;
use std::path::Path;

use crate::density::DensityField;
use crate::error::{Error, Result};
use crate::fem::GridDomain;

fn check_len(nx: usize, ny: usize, values: &[f64]) -> Result<()> {
    if nx == 0 || ny == 0 || values.len() != nx * ny {
        return Err(Error::param(format!(
            "a {nx}x{ny} grid needs {} values, got {}",
            nx * ny,
            values.len()
        )));
    }
    Ok(())
}

/// Row-major grid as CSV, one line per row, full `f64` round-trip precision.
pub fn grid_to_csv(nx: usize, ny: usize, values: &[f64]) -> Result<String> {
    check_len(nx, ny, values)?;
    let mut out = String::with_capacity(values.len() * 20);
    for row in values.chunks(nx) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Parses CSV written by [`grid_to_csv`], returning `(nx, ny, values)`.
pub fn grid_from_csv(text: &str) -> Result<(usize, usize, Vec<f64>)> {
    let mut nx = 0;
    let mut values = Vec::new();
    let mut ny = 0;
    for (k, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let row = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {k}: `{s}`: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if k == 0 {
            nx = row.len();
        } else if row.len() != nx {
            return Err(Error::Parse(format!(
                "row {k} has {} columns, expected {nx}",
                row.len()
            )));
        }
        values.extend(row);
        ny += 1;
    }
    if ny == 0 {
        return Err(Error::Parse("empty grid".into()));
    }
    Ok((nx, ny, values))
}

/// 8-bit grey image of `round(255·v)`; values are clamped to `[0, 1]`.
pub fn grid_to_pgm(nx: usize, ny: usize, values: &[f64]) -> Result<Vec<u8>> {
    check_len(nx, ny, values)?;
    let mut out = format!("P5\n{nx} {ny}\n255\n").into_bytes();
    out.extend(
        values
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    Ok(out)
}

/// Reads a P5 image back into values in `[0, 1]`.
pub fn grid_from_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    // header: magic, width, height, maxval, separated by whitespace or comments
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(Error::Parse("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(Error::Parse(format!(
            "expected P5 image, found `{}`",
            fields[0]
        )));
    }
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|e| Error::Parse(format!("PGM header `{s}`: {e}")))
    };
    let (nx, ny, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(Error::Parse(format!("unsupported PGM maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    let data = &bytes[(i + 1).min(bytes.len())..];
    if data.len() != nx * ny {
        return Err(Error::Parse(format!(
            "PGM raster has {} bytes, expected {}",
            data.len(),
            nx * ny
        )));
    }
    Ok((
        nx,
        ny,
        data.iter().map(|&b| b as f64 / maxval as f64).collect(),
    ))
}

pub fn write_density_csv(path: &Path, rho: &DensityField) -> Result<()> {
    fs::write(path, grid_to_csv(rho.nx, rho.ny, &rho.values)?)?;
    Ok(())
}

pub fn write_density_pgm(path: &Path, rho: &DensityField) -> Result<()> {
    fs::write(path, grid_to_pgm(rho.nx, rho.ny, &rho.values)?)?;
    Ok(())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|_| Error::MissingArtifact(path.display().to_string()))
}

/// Loads a density field from `.csv` or `.pgm`, chosen by extension.
pub fn read_density(path: &Path) -> Result<DensityField> {
    let bytes = read(path)?;
    let (nx, ny, values) = match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => grid_from_pgm(&bytes)?,
        _ => grid_from_csv(&String::from_utf8_lossy(&bytes))?,
    };
    DensityField::new(nx, ny, values)
}

/// One component of a nodal field as a `(ny+1)×(nx+1)` grid in the
/// domain's node order.
pub fn nodal_component(domain: &GridDomain, field: &[f64], component: usize) -> Result<Vec<f64>> {
    if field.len() != domain.num_dofs() || component >= domain.dofs_per_node {
        return Err(Error::param(format!(
            "nodal field of {} values, component {component}, does not fit the domain",
            field.len()
        )));
    }
    Ok((0..=domain.ny)
        .flat_map(|iy| (0..=domain.nx).map(move |ix| (ix, iy)))
        .map(|(ix, iy)| field[domain.dof(ix, iy, component)])
        .collect())
}

/// Displacement (or temperature) CSV: the components side by side, each a
/// `(ny+1)×(nx+1)` block.
pub fn write_nodal_csv(path: &Path, domain: &GridDomain, field: &[f64]) -> Result<()> {
    let mut out = String::new();
    for c in 0..domain.dofs_per_node {
        if c > 0 {
            out.push('\n');
        }
        out.push_str(&grid_to_csv(
            domain.nx + 1,
            domain.ny + 1,
            &nodal_component(domain, field, c)?,
        )?);
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let v = vec![0.1, 1.0 / 3.0, 0.0, 1.0, 2e-17, 0.5];
        let text = grid_to_csv(3, 2, &v).unwrap();
        assert_eq!(text.lines().count(), 2);
        let (nx, ny, back) = grid_from_csv(&text).unwrap();
        assert_eq!((nx, ny), (3, 2));
        assert_eq!(back, v);
    }

    #[test]
    fn ragged_csv_is_rejected() {
        assert!(grid_from_csv("1,2\n3\n").is_err());
        assert!(grid_from_csv("").is_err());
        assert!(grid_from_csv("1,x\n").is_err());
    }

    #[test]
    fn pgm_layout() {
        let bytes = grid_to_pgm(2, 1, &[0.0, 0.5]).unwrap();
        assert_eq!(&bytes[..11], b"P5\n2 1\n255\n");
        // 127.5 rounds half away from zero
        assert_eq!(&bytes[11..], &[0, 128]);
        let (nx, ny, v) = grid_from_pgm(&bytes).unwrap();
        assert_eq!((nx, ny), (2, 1));
        assert_eq!(v, vec![0.0, 128.0 / 255.0]);
    }

    #[test]
    fn pgm_header_comments() {
        let mut bytes = b"P5\n# made by hand\n1 1\n255\n".to_vec();
        bytes.push(255);
        assert_eq!(grid_from_pgm(&bytes).unwrap().2, vec![1.0]);
        assert!(grid_from_pgm(b"P2\n1 1\n255\n1").is_err());
    }

    #[test]
    fn nodal_components_follow_node_order() {
        let d = GridDomain::new(2, 1, 2).unwrap();
        let u: Vec<f64> = (0..d.num_dofs()).map(|i| i as f64).collect();
        let ux = nodal_component(&d, &u, 0).unwrap();
        let uy = nodal_component(&d, &u, 1).unwrap();
        assert_eq!(ux.len(), 6);
        for iy in 0..=1 {
            for ix in 0..=2 {
                assert_eq!(ux[iy * 3 + ix], u[d.dof(ix, iy, 0)]);
                assert_eq!(uy[iy * 3 + ix], u[d.dof(ix, iy, 1)]);
            }
        }
    }
}
