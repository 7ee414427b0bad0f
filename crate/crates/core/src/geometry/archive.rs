//! Binary chart container (`CMCCHART`) and its JSON sidecar.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic    8 bytes  "CMCCHART"
//! version  u32
//! backend  u32      1 torus-patch, 2 disk-patch, 3 bolza
//! n        u64
//! count    u64      number of chart nodes
//! pairings u64      number of deck transforms
//! nodes    count × (re f64, im f64)
//! rho      count × f64
//! weights  count × f64
//! pairing  pairings × (a.re a.im b.re b.im c.re c.im d.re d.im) f64
//! ```

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{mobius::Mobius, Backend, Chart};
use crate::error::{CmcError, Result};

pub const MAGIC: &[u8; 8] = b"CMCCHART";
pub const VERSION: u32 = 1;

/// Raw arrays of a serialised chart.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartArchive {
    pub backend: Backend,
    pub n: u64,
    pub nodes: Vec<Complex64>,
    pub rho: Vec<f64>,
    pub weights: Vec<f64>,
    pub pairings: Vec<Mobius>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChartSidecar {
    pub format: String,
    pub version: u32,
    pub backend: Backend,
    pub n: usize,
    pub nodes: usize,
    pub ghosts: usize,
    pub triangles: usize,
    pub spacing: f64,
    pub area: f64,
    pub boundary: String,
    pub content_hash: String,
    pub octagon_circumradius: Option<f64>,
    pub octagon_inradius: Option<f64>,
}

impl ChartArchive {
    pub fn from_chart(chart: &Chart) -> ChartArchive {
        ChartArchive {
            backend: chart.backend,
            n: chart.n as u64,
            nodes: chart.nodes.clone(),
            rho: chart.rho.clone(),
            weights: chart.weights.clone(),
            pairings: chart.octagon.as_ref().map(|o| o.generators.iter().map(|g| g.map).collect()).unwrap_or_default(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.backend.tag().to_le_bytes());
        out.extend_from_slice(&self.n.to_le_bytes());
        out.extend_from_slice(&(self.nodes.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.pairings.len() as u64).to_le_bytes());
        let mut put = |x: f64| out.extend_from_slice(&x.to_le_bytes());
        for z in &self.nodes {
            put(z.re);
            put(z.im);
        }
        self.rho.iter().for_each(|&x| put(x));
        self.weights.iter().for_each(|&x| put(x));
        for m in &self.pairings {
            for c in [m.a, m.b, m.c, m.d] {
                put(c.re);
                put(c.im);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ChartArchive> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(8)? != MAGIC {
            return Err(CmcError::Format("bad chart magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CmcError::Format(format!("unsupported chart version {version}")));
        }
        let tag = r.u32()?;
        let backend = Backend::from_tag(tag).ok_or_else(|| CmcError::Format(format!("unknown backend tag {tag}")))?;
        let n = r.u64()?;
        let count = r.u64()? as usize;
        let npair = r.u64()? as usize;
        let mut nodes = Vec::with_capacity(count);
        for _ in 0..count {
            nodes.push(Complex64::new(r.f64()?, r.f64()?));
        }
        let rho = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let weights = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let mut pairings = Vec::with_capacity(npair);
        for _ in 0..npair {
            let mut c = [Complex64::new(0.0, 0.0); 4];
            for slot in &mut c {
                *slot = Complex64::new(r.f64()?, r.f64()?);
            }
            pairings.push(Mobius { a: c[0], b: c[1], c: c[2], d: c[3] });
        }
        if r.at != bytes.len() {
            return Err(CmcError::Format("trailing bytes after chart payload".into()));
        }
        Ok(ChartArchive { backend, n, nodes, rho, weights, pairings })
    }
}

pub fn sidecar(chart: &Chart) -> ChartSidecar {
    ChartSidecar {
        format: "CMCCHART".into(),
        version: VERSION,
        backend: chart.backend,
        n: chart.n,
        nodes: chart.len(),
        ghosts: chart.ghosts.len(),
        triangles: chart.triangles.len(),
        spacing: chart.spacing,
        area: chart.area(),
        boundary: chart.boundary_spec().into(),
        content_hash: format!("{:016x}", chart.content_hash()),
        octagon_circumradius: chart.octagon.as_ref().map(|o| o.circumradius),
        octagon_inradius: chart.octagon.as_ref().map(|o| o.inradius),
    }
}

pub(crate) struct Reader<'a> {
    pub bytes: &'a [u8],
    pub at: usize,
}

impl<'a> Reader<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CmcError::Format("truncated input".into()))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }
    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
