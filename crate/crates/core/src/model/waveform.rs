use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniformly sampled complex envelope. Sample `k` sits at `t0 + k·dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    samples: Vec<Complex64>,
    dt: f64,
    t0: f64,
}

impl Waveform {
    pub fn new(samples: Vec<Complex64>, dt: f64, t0: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("waveform.samples", "must not be empty"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("waveform.dt", "must be positive and finite"));
        }
        if !t0.is_finite() {
            return Err(Error::invalid("waveform.t0", "must be finite"));
        }
        Ok(Self { samples, dt, t0 })
    }

    pub fn zeros(len: usize, dt: f64, t0: f64) -> Result<Self> {
        Self::new(vec![Complex64::new(0.0, 0.0); len], dt, t0)
    }

    /// Sample `f` at `t0 + k·dt` for `k in 0..len`.
    pub fn from_fn(len: usize, dt: f64, t0: f64, f: impl FnMut(f64) -> Complex64) -> Result<Self> {
        let mut f = f;
        let samples = (0..len).map(|k| f(t0 + k as f64 * dt)).collect();
        Self::new(samples, dt, t0)
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.samples.len() - 1)
    }

    /// Index of the sample closest to `t`, clamped to the grid.
    pub fn index_at(&self, t: f64) -> usize {
        let k = ((t - self.t0) / self.dt).round();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.samples.len() - 1)
        }
    }

    pub fn peak_abs(&self) -> f64 {
        self.samples.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `|a|²` per sample; the photon number for intra-cavity fields.
    pub fn photons(&self) -> Vec<f64> {
        self.samples.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn same_grid(&self, other: &Waveform) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::GridMismatch(format!(
                "lengths {} and {}",
                self.len(),
                other.len()
            )));
        }
        if (self.dt - other.dt).abs() > 1e-12 * self.dt {
            return Err(Error::GridMismatch(format!("dt {} and {}", self.dt, other.dt)));
        }
        if (self.t0 - other.t0).abs() > 1e-9 * self.dt {
            return Err(Error::GridMismatch(format!("t0 {} and {}", self.t0, other.t0)));
        }
        Ok(())
    }

    pub fn map(&self, mut f: impl FnMut(Complex64) -> Complex64) -> Waveform {
        Waveform {
            samples: self.samples.iter().map(|&z| f(z)).collect(),
            dt: self.dt,
            t0: self.t0,
        }
    }

    pub fn scaled(&self, c: Complex64) -> Waveform {
        self.map(|z| z * c)
    }

    /// Pointwise combination of two waveforms on the same grid.
    pub fn zip_with(
        &self,
        other: &Waveform,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<Waveform> {
        self.same_grid(other)?;
        Ok(Waveform {
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            dt: self.dt,
            t0: self.t0,
        })
    }

    /// Append `extra` zero samples.
    pub fn padded(&self, extra: usize) -> Waveform {
        let mut samples = self.samples.clone();
        samples.resize(self.samples.len() + extra, Complex64::new(0.0, 0.0));
        Waveform {
            samples,
            dt: self.dt,
            t0: self.t0,
        }
    }

    /// First `len` samples.
    pub fn truncated(&self, len: usize) -> Waveform {
        let len = len.clamp(1, self.samples.len());
        Waveform {
            samples: self.samples[..len].to_vec(),
            dt: self.dt,
            t0: self.t0,
        }
    }

    /// `Σ |z_k|² dt`.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.dt
    }

    /// CSV with a `# units:` comment line followed by a `t_ns,re,im` header.
    pub fn write_csv<W: Write>(&self, writer: W, units: &str) -> Result<()> {
        let mut writer = writer;
        let io = |e: std::io::Error| Error::io("<csv>", e);
        writeln!(writer, "# units: {units}").map_err(io)?;
        let mut csv = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| Error::Parse {
            what: "waveform csv".into(),
            reason: e.to_string(),
        };
        csv.write_record(["t_ns", "re", "im"]).map_err(csv_err)?;
        for (k, z) in self.samples.iter().enumerate() {
            let t_ns = self.time(k) * 1e9;
            csv.write_record([t_ns.to_string(), z.re.to_string(), z.im.to_string()])
                .map_err(csv_err)?;
        }
        csv.flush().map_err(io)?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, units: &str) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file), units)
    }

    /// Read a waveform CSV. The grid is reconstructed from the first and
    /// last time stamps and checked for uniformity.
    pub fn read_csv<R: Read>(reader: R) -> Result<Waveform> {
        let parse_err = |reason: String| Error::Parse {
            what: "waveform csv".into(),
            reason,
        };
        let mut csv = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = csv.headers().map_err(|e| parse_err(e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t_ns", "re", "im"] {
            return Err(parse_err(format!("expected header t_ns,re,im, got {headers:?}")));
        }
        let mut times = Vec::new();
        let mut samples = Vec::new();
        for record in csv.records() {
            let record = record.map_err(|e| parse_err(e.to_string()))?;
            let field = |i: usize| -> Result<f64> {
                record
                    .get(i)
                    .ok_or_else(|| parse_err("short row".into()))?
                    .parse::<f64>()
                    .map_err(|e| parse_err(e.to_string()))
            };
            times.push(field(0)? * 1e-9);
            samples.push(Complex64::new(field(1)?, field(2)?));
        }
        if samples.len() < 2 {
            return Err(parse_err("need at least two samples to infer the time step".into()));
        }
        let n = samples.len();
        let dt = (times[n - 1] - times[0]) / (n - 1) as f64;
        for (k, &t) in times.iter().enumerate() {
            if (t - (times[0] + k as f64 * dt)).abs() > 1e-6 * dt {
                return Err(parse_err(format!("non-uniform time axis at row {k}")));
            }
        }
        Waveform::new(samples, dt, times[0])
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Waveform> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_bad_step() {
        assert!(Waveform::new(vec![], 1e-9, 0.0).is_err());
        assert!(Waveform::zeros(3, 0.0, 0.0).is_err());
        assert!(Waveform::zeros(3, -1e-9, 0.0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let w = Waveform::from_fn(50, 1e-9, 2e-9, |t| Complex64::new((t * 1e8).sin(), -t * 1e6)).unwrap();
        let mut buf = Vec::new();
        w.write_csv(&mut buf, "sqrt(photons/s)").unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# units: sqrt(photons/s)\nt_ns,re,im\n"));
        let back = Waveform::read_csv(&buf[..]).unwrap();
        assert_eq!(back.samples(), w.samples());
        assert!((back.dt() - w.dt()).abs() < 1e-15 * 1e-9 * 1e3);
        assert!((back.t0() - w.t0()).abs() < 1e-20);
    }

    #[test]
    fn grid_mismatch_is_detected() {
        let a = Waveform::zeros(10, 1e-9, 0.0).unwrap();
        let b = Waveform::zeros(11, 1e-9, 0.0).unwrap();
        let c = Waveform::zeros(10, 2e-9, 0.0).unwrap();
        assert!(a.same_grid(&b).is_err());
        assert!(a.same_grid(&c).is_err());
        assert!(a.zip_with(&a, |x, y| x + y).is_ok());
    }
}
