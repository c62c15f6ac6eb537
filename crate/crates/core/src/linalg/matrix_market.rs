//! MatrixMarket coordinate dumps for debugging assembled operators.

use std::io::{self, BufRead, Write};

use super::CsrMatrix;

/// Writes `a` as `%%MatrixMarket matrix coordinate real general`.
pub fn write<W: Write>(a: &CsrMatrix, mut out: W) -> io::Result<()> {
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{} {} {}", a.n_rows(), a.n_cols(), a.nnz())?;
    for (i, j, v) in a.triplets() {
        writeln!(out, "{} {} {:.17e}", i + 1, j + 1, v)?;
    }
    Ok(())
}

/// Reads a general real coordinate file written by [`write`].
pub fn read<R: BufRead>(input: R) -> io::Result<CsrMatrix> {
    let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| bad("empty file"))??;
    if !header.starts_with("%%MatrixMarket matrix coordinate real") {
        return Err(bad("unsupported MatrixMarket header"));
    }
    let mut size = None;
    let mut trip = Vec::new();
    for line in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let f: Vec<&str> = t.split_whitespace().collect();
        if size.is_none() {
            let p = |s: &str| s.parse::<usize>().map_err(|_| bad("bad size line"));
            size = Some((p(f[0])?, p(f[1])?));
            continue;
        }
        if f.len() != 3 {
            return Err(bad("bad entry line"));
        }
        let i: usize = f[0].parse().map_err(|_| bad("bad row"))?;
        let j: usize = f[1].parse().map_err(|_| bad("bad col"))?;
        let v: f64 = f[2].parse().map_err(|_| bad("bad value"))?;
        trip.push((i - 1, j - 1, v));
    }
    let (r, c) = size.ok_or_else(|| bad("missing size line"))?;
    CsrMatrix::from_triplets(r, c, &trip).map_err(|e| bad(&e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let a = CsrMatrix::from_triplets(2, 3, &[(0, 2, 0.1), (1, 0, -3.5)]).unwrap();
        let mut buf = Vec::new();
        write(&a, &mut buf).unwrap();
        let b = read(io::Cursor::new(buf)).unwrap();
        assert_eq!(a, b);
    }
}
