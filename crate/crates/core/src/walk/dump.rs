//! Binary path dump: magic, env id, start, seed, n, then `n` little-endian
//! `i32` step increments.

use std::io::{Read, Write};

use super::Path;
use crate::error::{LabError, Result};

const MAGIC: &[u8; 8] = b"CLPATH01";

pub fn write_path<W: Write>(path: &Path, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    let id = path.env_id.as_bytes();
    let id_len = u16::try_from(id.len()).map_err(|_| LabError::InvalidArgument("env id too long".into()))?;
    out.write_all(&id_len.to_le_bytes())?;
    out.write_all(id)?;
    out.write_all(&path.start.to_le_bytes())?;
    out.write_all(&path.seed.to_le_bytes())?;
    out.write_all(&(path.len() as u64).to_le_bytes())?;
    for w in path.steps.windows(2) {
        let d = i32::try_from(w[1] - w[0]).map_err(|_| LabError::InvalidArgument("step exceeds i32".into()))?;
        out.write_all(&d.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_path<R: Read>(mut input: R) -> Result<Path> {
    let bad = |detail: &str| LabError::Parse { what: "path dump", detail: detail.to_string() };
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let mut b2 = [0u8; 2];
    input.read_exact(&mut b2)?;
    let mut id = vec![0u8; u16::from_le_bytes(b2) as usize];
    input.read_exact(&mut id)?;
    let env_id = String::from_utf8(id).map_err(|_| bad("env id is not utf-8"))?;
    let mut b8 = [0u8; 8];
    input.read_exact(&mut b8)?;
    let start = i64::from_le_bytes(b8);
    input.read_exact(&mut b8)?;
    let seed = u64::from_le_bytes(b8);
    input.read_exact(&mut b8)?;
    let n = u64::from_le_bytes(b8) as usize;
    let mut steps = Vec::with_capacity(n + 1);
    steps.push(start);
    let mut x = start;
    let mut b4 = [0u8; 4];
    for _ in 0..n {
        input.read_exact(&mut b4)?;
        x += i64::from(i32::from_le_bytes(b4));
        steps.push(x);
    }
    Ok(Path { start, steps, env_id, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_layout_and_round_trip() {
        let path = Path { start: -3, steps: vec![-3, -2, -4, 1], env_id: "e".into(), seed: 9 };
        let mut buf = Vec::new();
        write_path(&path, &mut buf).unwrap();
        assert_eq!(&buf[..8], b"CLPATH01");
        assert_eq!(buf.len(), 8 + 2 + 1 + 8 + 8 + 8 + 3 * 4);
        assert_eq!(&buf[buf.len() - 4..], &5i32.to_le_bytes());
        assert_eq!(read_path(buf.as_slice()).unwrap(), path);
        assert!(read_path(&buf[..20]).is_err());
    }
}
