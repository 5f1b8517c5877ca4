//! Binary parameter container.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic        4 bytes  "FSTP"
//! version      u32      1
//! instr_dim    u32
//! history_dim  u32
//! cand_dim     u32
//! n_hidden     u32
//! hidden       u32 × n_hidden
//! adaptable    u32      number of trailing adaptable layer norms
//! n_arrays     u32
//! n_arrays × { name_len u16, name utf-8, len u64, f64 × len }
//! ```
//!
//! Arrays are written in the order `layer{i}.weight`, `layer{i}.bias` for
//! each hidden layer, `norm{i}.gamma`, `norm{i}.beta` for each norm, then
//! `head.weight`, `head.bias`. Readers look arrays up by name and check
//! their lengths against the architecture.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Architecture, Dense, LayerNorm, PolicyParams};
use crate::error::{Error, Result};

pub const PARAMS_MAGIC: &[u8; 4] = b"FSTP";
pub const PARAMS_VERSION: u32 = 1;

fn named_arrays(p: &PolicyParams) -> Vec<(String, &[f64])> {
    let mut out: Vec<(String, &[f64])> = Vec::new();
    for (i, d) in p.layers.iter().enumerate() {
        out.push((format!("layer{i}.weight"), &d.weights));
        out.push((format!("layer{i}.bias"), &d.bias));
    }
    for (i, ln) in p.norms.iter().enumerate() {
        out.push((format!("norm{i}.gamma"), &ln.gamma));
        out.push((format!("norm{i}.beta"), &ln.beta));
    }
    out.push(("head.weight".into(), &p.head.weights));
    out.push(("head.bias".into(), &p.head.bias));
    out
}

fn u32_of(n: usize) -> Result<[u8; 4]> {
    u32::try_from(n).map(u32::to_le_bytes).map_err(|_| Error::Format(format!("{n} does not fit in u32")))
}

pub fn write_params<W: Write>(mut w: W, p: &PolicyParams) -> Result<()> {
    let a = &p.arch;
    w.write_all(PARAMS_MAGIC)?;
    w.write_all(&PARAMS_VERSION.to_le_bytes())?;
    for n in [a.instruction_dim, a.history_dim, a.candidate_dim, a.hidden.len()] {
        w.write_all(&u32_of(n)?)?;
    }
    for &h in &a.hidden {
        w.write_all(&u32_of(h)?)?;
    }
    w.write_all(&u32_of(a.adaptable_norms)?)?;
    let arrays = named_arrays(p);
    w.write_all(&u32_of(arrays.len())?)?;
    for (name, data) in arrays {
        let len = u16::try_from(name.len()).map_err(|_| Error::Format("array name too long".into()))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(data.len() as u64).to_le_bytes())?;
        for v in data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_params<R: Read>(mut r: R) -> Result<PolicyParams> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != PARAMS_MAGIC {
        return Err(Error::Format("not a parameter file (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != PARAMS_VERSION {
        return Err(Error::Format(format!("parameter file version {version}, expected {PARAMS_VERSION}")));
    }
    let instruction_dim = read_u32(&mut r)? as usize;
    let history_dim = read_u32(&mut r)? as usize;
    let candidate_dim = read_u32(&mut r)? as usize;
    let n_hidden = read_u32(&mut r)? as usize;
    if n_hidden > 64 {
        return Err(Error::Format(format!("implausible hidden layer count {n_hidden}")));
    }
    let hidden = (0..n_hidden).map(|_| read_u32(&mut r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let adaptable_norms = read_u32(&mut r)? as usize;
    let arch = Architecture { instruction_dim, history_dim, candidate_dim, hidden, adaptable_norms };
    arch.validate().map_err(|e| Error::Format(format!("bad architecture header: {e}")))?;

    let n_arrays = read_u32(&mut r)? as usize;
    let mut arrays: HashMap<String, Vec<f64>> = HashMap::with_capacity(n_arrays);
    for _ in 0..n_arrays {
        let mut lb = [0u8; 2];
        r.read_exact(&mut lb)?;
        let mut name = vec![0u8; u16::from_le_bytes(lb) as usize];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("array name is not utf-8".into()))?;
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 28 {
            return Err(Error::Format(format!("array {name} is implausibly long ({len})")));
        }
        let mut bytes = vec![0u8; len * 8];
        r.read_exact(&mut bytes)?;
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        if arrays.insert(name.clone(), data).is_some() {
            return Err(Error::Format(format!("duplicate array {name}")));
        }
    }

    let mut take = |name: String, len: usize| -> Result<Vec<f64>> {
        let v = arrays.remove(&name).ok_or_else(|| Error::Format(format!("missing array {name}")))?;
        if v.len() != len {
            return Err(Error::Format(format!("array {name} has length {}, expected {len}", v.len())));
        }
        Ok(v)
    };
    let mut layers = Vec::with_capacity(arch.hidden.len());
    let mut width = arch.input_dim();
    for (i, &h) in arch.hidden.iter().enumerate() {
        let weights = take(format!("layer{i}.weight"), width * h)?;
        let bias = take(format!("layer{i}.bias"), h)?;
        layers.push(Dense { inputs: width, outputs: h, weights, bias });
        width = h;
    }
    let mut norms = Vec::with_capacity(arch.hidden.len());
    for (i, &h) in arch.hidden.iter().enumerate() {
        norms.push(LayerNorm { gamma: take(format!("norm{i}.gamma"), h)?, beta: take(format!("norm{i}.beta"), h)? });
    }
    let head = Dense { inputs: width, outputs: 1, weights: take("head.weight".into(), width)?, bias: take("head.bias".into(), 1)? };
    if let Some(extra) = arrays.keys().next() {
        return Err(Error::Format(format!("unexpected array {extra}")));
    }
    Ok(PolicyParams { arch, layers, norms, head })
}

pub fn save_params(path: &Path, p: &PolicyParams) -> Result<()> {
    write_params(BufWriter::new(File::create(path)?), p)
}

pub fn load_params(path: &Path) -> Result<PolicyParams> {
    read_params(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let p = PolicyParams::init(Architecture::default(), 0).unwrap();
        let mut buf = Vec::new();
        write_params(&mut buf, &p).unwrap();
        assert_eq!(&buf[..4], b"FSTP");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 8);
        assert_eq!(u32::from_le_bytes(buf[20..24].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(buf[24..28].try_into().unwrap()), 32);
        let floats = 24 * 32 + 32 + 32 * 32 + 32 + 4 * 32 + 32 + 1;
        let names: usize = ["layer0.weight", "layer0.bias", "layer1.weight", "layer1.bias", "norm0.gamma", "norm0.beta", "norm1.gamma", "norm1.beta", "head.weight", "head.bias"]
            .iter()
            .map(|n| 2 + n.len() + 8)
            .sum();
        assert_eq!(buf.len(), 40 + names + 8 * floats);
    }

    #[test]
    fn rejects_corruption() {
        let p = PolicyParams::init(Architecture::default(), 0).unwrap();
        let mut buf = Vec::new();
        write_params(&mut buf, &p).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_params(&bad[..]), Err(Error::Format(_))));
        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(matches!(read_params(&bad[..]), Err(Error::Format(_))));
        assert!(read_params(&buf[..buf.len() - 3]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn round_trip_is_bit_exact(seed in any::<u64>(), w1 in 1usize..12, w2 in 1usize..12, adapt in 0usize..3) {
            let arch = Architecture { hidden: vec![w1, w2], adaptable_norms: adapt, ..Architecture::default() };
            let mut p = PolicyParams::init(arch, seed).unwrap();
            p.norms[1].beta[0] = -0.0;
            p.head.bias[0] = f64::MIN_POSITIVE / 3.0;
            let mut buf = Vec::new();
            write_params(&mut buf, &p).unwrap();
            let q = read_params(&buf[..]).unwrap();
            let bits = |p: &PolicyParams| named_arrays(p).into_iter().flat_map(|(_, d)| d.iter().map(|v| v.to_bits()).collect::<Vec<_>>()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&p), bits(&q));
            prop_assert_eq!(p.arch, q.arch);
        }
    }
}
