//! Field serialization.
//!
//! Binary layout (little endian): magic `MSHF`, `u32` version, `u32` n,
//! `u32` nodes per axis, `f64` radius, `f64` spacing, then one `f64` value per
//! node (`-inf` allowed) followed by one `u8` mask byte per node. Nodes are in
//! storage order, axis `x_1` fastest.
//!
//! CSV columns: `node,x1,y1[,x2,y2],value,mask`, preceded by `#` header lines
//! carrying n, shape, radius and spacing.

use super::{Domain, ScalarField};
use crate::error::{Error, Result};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"MSHF";
const VERSION: u32 = 1;

pub fn write_binary(field: &ScalarField, mut w: impl Write) -> Result<()> {
    let d = field.domain();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(d.n() as u32).to_le_bytes())?;
    w.write_all(&(d.nodes_per_axis() as u32).to_le_bytes())?;
    w.write_all(&d.radius().to_le_bytes())?;
    w.write_all(&d.spacing().to_le_bytes())?;
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    let bytes: Vec<u8> = field.mask().iter().map(|&m| m as u8).collect();
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_binary(mut r: impl Read) -> Result<ScalarField> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Config("not a field file".into()));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(Error::Config(format!("unsupported field version {version}")));
    }
    r.read_exact(&mut b4)?;
    let n = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)?;
    let npa = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b8)?;
    let radius = f64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let _spacing = f64::from_le_bytes(b8);
    if npa < 5 {
        return Err(Error::Config(format!("bad nodes per axis {npa}")));
    }
    let domain = Domain::ball(n, radius, npa - 1)?;
    let count = domain.num_nodes();
    let mut raw = vec![0u8; count * 8];
    r.read_exact(&mut raw)?;
    let values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut mbytes = vec![0u8; count];
    r.read_exact(&mut mbytes)?;
    let mask = mbytes.iter().map(|&b| b != 0).collect();
    ScalarField::from_parts(domain, values, mask)
}

pub fn write_csv(field: &ScalarField, mut w: impl Write) -> Result<()> {
    let d = field.domain();
    writeln!(w, "# n={}", d.n())?;
    writeln!(w, "# shape=ball")?;
    writeln!(w, "# radius={}", d.radius())?;
    writeln!(w, "# spacing={}", d.spacing())?;
    writeln!(w, "# nodes_per_axis={}", d.nodes_per_axis())?;
    let axes = ["x1", "y1", "x2", "y2"];
    writeln!(w, "node,{},value,mask", axes[..d.real_dim()].join(","))?;
    for i in 0..d.num_nodes() {
        let x = d.coords(i);
        write!(w, "{i}")?;
        for xa in x.iter().take(d.real_dim()) {
            write!(w, ",{xa}")?;
        }
        writeln!(w, ",{},{}", field.values()[i], field.mask()[i] as u8)?;
    }
    Ok(())
}

pub fn read_csv(r: impl Read) -> Result<ScalarField> {
    let mut n = None;
    let mut radius = None;
    let mut npa = None;
    let mut values = Vec::new();
    let mut mask = Vec::new();
    let mut seen_header = false;
    for line in BufReader::new(r).lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            if let Some((k, v)) = meta.trim().split_once('=') {
                let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| Error::Config(e.to_string()));
                match k.trim() {
                    "n" => n = Some(parse(v)? as usize),
                    "radius" => radius = Some(parse(v)?),
                    "nodes_per_axis" => npa = Some(parse(v)? as usize),
                    _ => {}
                }
            }
            continue;
        }
        if !seen_header {
            seen_header = true;
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 3 {
            return Err(Error::Config(format!("short CSV row: {line}")));
        }
        let v: f64 = cols[cols.len() - 2]
            .parse()
            .map_err(|_| Error::Config(format!("bad value in row: {line}")))?;
        values.push(v);
        mask.push(cols[cols.len() - 1] == "1");
    }
    let (n, radius, npa) = match (n, radius, npa) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(Error::Config("CSV header lacks n, radius or nodes_per_axis".into())),
    };
    let domain = Domain::ball(n, radius, npa.saturating_sub(1))?;
    ScalarField::from_parts(domain, values, mask)
}

pub fn save_binary(field: &ScalarField, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write_binary(field, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_binary(path: &Path) -> Result<ScalarField> {
    read_binary(BufReader::new(std::fs::File::open(path)?))
}

pub fn save_csv(field: &ScalarField, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write_csv(field, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_csv(path: &Path) -> Result<ScalarField> {
    read_csv(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::ExtReal;

    fn sample() -> ScalarField {
        let d = Domain::ball(1, 1.0, 8).unwrap();
        let dd = d.clone();
        ScalarField::from_fn(d, move |i| {
            let r2 = dd.norm_sqr(i);
            if r2 < 0.05 {
                ExtReal::NegInf
            } else {
                ExtReal::Finite(0.5 * r2.ln())
            }
        })
    }

    #[test]
    fn binary_round_trip() {
        let f = sample();
        let mut buf = Vec::new();
        write_binary(&f, &mut buf).unwrap();
        let g = read_binary(buf.as_slice()).unwrap();
        assert_eq!(f.values(), g.values());
        assert_eq!(f.mask(), g.mask());
        assert!(f.mask().iter().any(|&m| m));
    }

    #[test]
    fn csv_round_trip() {
        let f = sample();
        let mut buf = Vec::new();
        write_csv(&f, &mut buf).unwrap();
        let g = read_csv(buf.as_slice()).unwrap();
        assert_eq!(f.mask(), g.mask());
        for (a, b) in f.values().iter().zip(g.values()) {
            assert!(a == b || (a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_binary(&b"NOPE0000"[..]).is_err());
    }
}
