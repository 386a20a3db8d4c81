//! CSV artifacts: grid fields, particle dumps and study report rows.
//!
//! Species are written 1-based. Floats use Rust's shortest round-trip
//! formatting, so the same run always produces the same bytes.

use std::io::{Read, Write};

use crate::grid::GridField;
use crate::particles::ParticleSnapshot;
use crate::{Error, Result};

fn coord_headers(dim: usize) -> impl Iterator<Item = String> {
    (1..=dim).map(|a| format!("x{a}"))
}

/// Node coordinates followed by one density column per species.
pub fn write_grid_csv<W: Write>(out: W, field: &GridField) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let grid = field.grid;
    let header: Vec<String> = coord_headers(grid.dim)
        .chain((1..=field.species()).map(|r| format!("s{r}")))
        .collect();
    w.write_record(&header)?;
    for i in 0..grid.node_count() {
        let x = grid.coord(i);
        let row: Vec<String> = x[..grid.dim]
            .iter()
            .map(f64::to_string)
            .chain(field.values.iter().map(|v| v[i].to_string()))
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per particle: `species, x1, .., xd`.
pub fn write_particles_csv<W: Write>(out: W, snapshot: &ParticleSnapshot) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let dim = snapshot.dim;
    let header: Vec<String> = std::iter::once("species".to_string())
        .chain(coord_headers(dim))
        .collect();
    w.write_record(&header)?;
    for (r, pos) in snapshot.positions.iter().enumerate() {
        for x in pos.chunks_exact(dim) {
            let row: Vec<String> = std::iter::once((r + 1).to_string())
                .chain(x.iter().map(f64::to_string))
                .collect();
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a particle dump back into per-species flat position arrays.
pub fn read_particles_csv<R: Read>(input: R, species: usize) -> Result<(usize, Vec<Vec<f64>>)> {
    let mut rd = csv::Reader::from_reader(input);
    let dim = rd.headers()?.len().saturating_sub(1);
    if dim == 0 {
        return Err(Error::Config("particle dump has no coordinate columns".into()));
    }
    let mut out = vec![Vec::new(); species];
    for rec in rd.records() {
        let rec = rec?;
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::Config(format!("bad number {s:?}: {e}")))
        };
        let r: usize = rec[0]
            .parse()
            .map_err(|e| Error::Config(format!("bad species {:?}: {e}", &rec[0])))?;
        if r == 0 || r > species {
            return Err(Error::SpeciesIndex { index: r, count: species });
        }
        for a in 0..dim {
            out[r - 1].push(parse(&rec[a + 1])?);
        }
    }
    Ok((dim, out))
}

/// One line of `report.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub n: u64,
    pub replica: usize,
    pub t: f64,
    /// `||d_r||_2^2` per species.
    pub d2: Vec<f64>,
    /// Dictionary lower bound of the dual-norm distance.
    pub d_est: f64,
    /// `sum_r m_r N_r`.
    pub mass: u64,
    pub clip_frac: f64,
}

pub fn report_header(species: usize) -> Vec<String> {
    ["N", "replica", "t"]
        .iter()
        .map(|s| s.to_string())
        .chain((1..=species).map(|r| format!("d2_{r}")))
        .chain(["D_est", "mass", "clip_frac"].iter().map(|s| s.to_string()))
        .collect()
}

impl ReportRow {
    pub fn record(&self) -> Vec<String> {
        [self.n.to_string(), self.replica.to_string(), self.t.to_string()]
            .into_iter()
            .chain(self.d2.iter().map(f64::to_string))
            .chain([
                self.d_est.to_string(),
                self.mass.to_string(),
                self.clip_frac.to_string(),
            ])
            .collect()
    }
}

pub fn write_report_csv<W: Write>(out: W, species: usize, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(report_header(species))?;
    for row in rows {
        w.write_record(row.record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report_csv<R: Read>(input: R) -> Result<Vec<ReportRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let width = rd.headers()?.len();
    if width < 7 {
        return Err(Error::Config(format!("report has only {width} columns")));
    }
    let species = width - 6;
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let f = |i: usize| {
            rec[i]
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("column {i}: {e}")))
        };
        let u = |i: usize| {
            rec[i]
                .parse::<u64>()
                .map_err(|e| Error::Config(format!("column {i}: {e}")))
        };
        rows.push(ReportRow {
            n: u(0)?,
            replica: u(1)? as usize,
            t: f(2)?,
            d2: (0..species).map(|r| f(3 + r)).collect::<Result<_>>()?,
            d_est: f(3 + species)?,
            mass: u(4 + species)?,
            clip_frac: f(5 + species)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::particles::Counters;

    #[test]
    fn particle_dump_roundtrip() {
        let snap = ParticleSnapshot {
            dim: 2,
            length: 1.0,
            t: 0.5,
            positions: vec![vec![0.1, 0.2, 0.3, 0.4], vec![0.123456789012345, 0.9]],
            masses: vec![1, 2],
            total_atoms: 4,
            counters: Counters::default(),
        };
        let mut buf = Vec::new();
        write_particles_csv(&mut buf, &snap).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("species,x1,x2\n1,0.1,0.2\n"));
        let (dim, pos) = read_particles_csv(&buf[..], 2).unwrap();
        assert_eq!(dim, 2);
        assert_eq!(pos, snap.positions);
    }

    #[test]
    fn report_roundtrip_and_header() {
        let rows = vec![ReportRow {
            n: 1000,
            replica: 3,
            t: 0.25,
            d2: vec![1e-3, 2.5e-4],
            d_est: 0.01,
            mass: 1000,
            clip_frac: 0.0,
        }];
        let mut buf = Vec::new();
        write_report_csv(&mut buf, 2, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "N,replica,t,d2_1,d2_2,D_est,mass,clip_frac"
        );
        assert_eq!(read_report_csv(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn grid_csv_has_one_row_per_node() {
        let g = Grid::new(1, 4, 2.0).unwrap();
        let f = GridField::from_fn(g, 2, |r, x| r as f64 + x[0]);
        let mut buf = Vec::new();
        write_grid_csv(&mut buf, &f).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert_eq!(text.lines().nth(2).unwrap(), "0.5,0.5,1.5");
    }
}
