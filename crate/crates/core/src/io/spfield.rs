use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};
use crate::grid::GridDomain;
use crate::scalar::Real;

const MAGIC: &str = "SPFIELD";
const VERSION: &str = "v1";

/// Payload encoding after the header line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Encoding {
    /// One decimal value per line.
    #[default]
    Ascii,
    /// Little-endian `f64`.
    Binary,
}

/// A raw per-cell field: `SPFIELD v1 dim nx [ny [nz]] h` followed by the
/// values with the first axis fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct SpField {
    pub dim: usize,
    /// Cells per axis; unused axes are 1.
    pub shape: [usize; 3],
    pub h: f64,
    pub values: Vec<f64>,
}

impl SpField {
    pub fn from_domain<T: Real>(domain: &GridDomain<T>, values: &[T]) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::InvalidInput(format!(
                "field has {} entries, grid has {} cells",
                values.len(),
                domain.len()
            )));
        }
        Ok(Self {
            dim: domain.dim(),
            shape: domain.shape(),
            h: domain.h().as_f64(),
            values: values.iter().map(|v| v.as_f64()).collect(),
        })
    }

    /// Values converted to `T`, after checking that the header matches `domain`.
    pub fn values_on<T: Real>(&self, domain: &GridDomain<T>) -> Result<Vec<T>> {
        let h = domain.h().as_f64();
        if self.dim != domain.dim() || self.shape != domain.shape() || (self.h - h).abs() > 1e-12 * h {
            return Err(Error::DomainMismatch);
        }
        Ok(self.values.iter().map(|&v| T::lit(v)).collect())
    }

    fn len(&self) -> usize {
        self.shape.iter().product()
    }
}

pub fn write_spfield(mut out: impl Write, field: &SpField, encoding: Encoding) -> Result<()> {
    if field.values.len() != field.len() {
        return Err(Error::InvalidInput("field length does not match its shape".into()));
    }
    let dims: Vec<String> = field.shape[..field.dim].iter().map(|n| n.to_string()).collect();
    writeln!(out, "{MAGIC} {VERSION} {} {} {}", field.dim, dims.join(" "), field.h)?;
    match encoding {
        Encoding::Ascii => {
            for v in &field.values {
                writeln!(out, "{v}")?;
            }
        }
        Encoding::Binary => {
            for v in &field.values {
                out.write_all(&v.to_le_bytes())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads either encoding; a payload of exactly `8 N` bytes containing a
/// non-text byte is taken as binary.
pub fn read_spfield(input: impl Read) -> Result<SpField> {
    let mut reader = BufReader::new(input);
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() < 4 || tokens[0] != MAGIC {
        return Err(Error::Format("missing SPFIELD header".into()));
    }
    if tokens[1] != VERSION {
        return Err(Error::Format(format!("unsupported version {}", tokens[1])));
    }
    let dim: usize = tokens[2]
        .parse()
        .map_err(|_| Error::Format(format!("bad dimension {:?}", tokens[2])))?;
    if !(1..=3).contains(&dim) || tokens.len() != 4 + dim {
        return Err(Error::Format(format!("header has {} fields for dimension {dim}", tokens.len())));
    }
    let mut shape = [1usize; 3];
    for (axis, tok) in tokens[3..3 + dim].iter().enumerate() {
        shape[axis] = tok
            .parse()
            .ok()
            .filter(|&n: &usize| n > 0)
            .ok_or_else(|| Error::Format(format!("bad cell count {tok:?}")))?;
    }
    let h: f64 = tokens[3 + dim]
        .parse()
        .ok()
        .filter(|h: &f64| *h > 0.0 && h.is_finite())
        .ok_or_else(|| Error::Format(format!("bad spacing {:?}", tokens[3 + dim])))?;
    let n: usize = shape.iter().product();

    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    let is_text = |b: &u8| b.is_ascii_graphic() || b.is_ascii_whitespace();
    let values = if payload.len() == 8 * n && !payload.iter().all(is_text) {
        payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect()
    } else {
        let text = std::str::from_utf8(&payload).map_err(|_| Error::Format("payload is neither text nor binary".into()))?;
        let values: Vec<f64> = text
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Format(format!("bad value {t:?}"))))
            .collect::<Result<_>>()?;
        if values.len() != n {
            return Err(Error::Format(format!("expected {n} values, found {}", values.len())));
        }
        values
    };
    Ok(SpField { dim, shape, h, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SpField {
        SpField {
            dim: 2,
            shape: [3, 2, 1],
            h: 0.125,
            values: vec![0.0, 1.5, -2.25, 1e-300, 0.1, 32.0],
        }
    }

    #[test]
    fn round_trips_both_encodings() {
        for enc in [Encoding::Ascii, Encoding::Binary] {
            let mut buf = Vec::new();
            write_spfield(&mut buf, &sample(), enc).unwrap();
            assert!(buf.starts_with(b"SPFIELD v1 2 3 2 0.125\n"));
            assert_eq!(read_spfield(&buf[..]).unwrap(), sample());
        }
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(read_spfield(&b"FIELD v1 1 2 0.5\n0\n0\n"[..]).is_err());
        assert!(read_spfield(&b"SPFIELD v2 1 2 0.5\n0\n0\n"[..]).is_err());
        assert!(read_spfield(&b"SPFIELD v1 2 2 0.5\n0\n0\n"[..]).is_err());
        assert!(read_spfield(&b"SPFIELD v1 1 3 0.5\n0\n0\n"[..]).is_err());
        assert!(read_spfield(&b"SPFIELD v1 1 2 0.5\n0\nx\n"[..]).is_err());
    }
}
