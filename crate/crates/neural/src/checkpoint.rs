//! Binary checkpoint format.
//!
//! Layout: magic `NNCK`, u32 spec length, UTF-8 spec string, u64 parameter
//! count, then the parameters as little-endian `f64`.

use std::io::{Read, Write};

use crate::{NetworkParams, NeuralError, Result};

const MAGIC: &[u8; 4] = b"NNCK";

pub fn write_checkpoint<W: Write>(net: &NetworkParams, mut w: W) -> Result<()> {
    let spec = net.spec_string();
    w.write_all(MAGIC)?;
    w.write_all(&(spec.len() as u32).to_le_bytes())?;
    w.write_all(spec.as_bytes())?;
    w.write_all(&(net.len() as u64).to_le_bytes())?;
    for p in net.params() {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<NetworkParams> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NeuralError::Format("bad magic".into()));
    }
    let mut len4 = [0u8; 4];
    r.read_exact(&mut len4)?;
    let mut spec = vec![0u8; u32::from_le_bytes(len4) as usize];
    r.read_exact(&mut spec)?;
    let spec = String::from_utf8(spec).map_err(|e| NeuralError::Format(e.to_string()))?;
    let mut net = NetworkParams::from_spec_string(&spec)?;
    let mut len8 = [0u8; 8];
    r.read_exact(&mut len8)?;
    let count = u64::from_le_bytes(len8) as usize;
    if count != net.len() {
        return Err(NeuralError::Format(format!(
            "spec implies {} parameters, file holds {count}",
            net.len()
        )));
    }
    let mut buf = [0u8; 8];
    for p in net.params_mut() {
        r.read_exact(&mut buf)?;
        *p = f64::from_le_bytes(buf);
    }
    Ok(net)
}

pub fn save(net: &NetworkParams, path: &std::path::Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_checkpoint(net, std::io::BufWriter::new(f))
}

pub fn load(path: &std::path::Path) -> Result<NetworkParams> {
    let f = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(f))
}
