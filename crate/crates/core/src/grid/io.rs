//! Snapshot files: a 32-byte header (`LADYGRID`, nx, ny, field count,
//! reserved, time) followed by the fields `u`, `v`, `q` as row-major
//! little-endian `f64`.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{FlowState, MacGrid};
use crate::error::{Error, Result};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"LADYGRID";
const HEADER_LEN: usize = 32;

pub fn write_snapshot(path: &Path, grid: &MacGrid, state: &FlowState) -> Result<()> {
    state.check(grid)?;
    let n = grid.n() as u32;
    let mut buf = Vec::with_capacity(HEADER_LEN + 3 * 8 * grid.len());
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.extend_from_slice(&n.to_le_bytes());
    buf.extend_from_slice(&n.to_le_bytes());
    buf.extend_from_slice(&3u32.to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    buf.extend_from_slice(&state.time.to_le_bytes());
    for field in [&state.u, &state.v, &state.q] {
        for x in field.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads a snapshot back as `(nx, state)`.
pub fn read_snapshot(path: &Path) -> Result<(usize, FlowState)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER_LEN || &bytes[..8] != SNAPSHOT_MAGIC {
        return Err(Error::Format(format!("{} is not a grid snapshot", path.display())));
    }
    let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let (nx, ny, fields) = (word(8), word(12), word(16));
    let time = f64::from_le_bytes(bytes[24..32].try_into().unwrap());
    let len = nx * ny;
    if nx != ny || fields != 3 || bytes.len() != HEADER_LEN + 8 * fields * len {
        return Err(Error::Format(format!(
            "{}: header ({nx}, {ny}, {fields}) does not match {} bytes",
            path.display(),
            bytes.len()
        )));
    }
    let field = |f: usize| -> Vec<f64> {
        let start = HEADER_LEN + 8 * f * len;
        bytes[start..start + 8 * len]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    Ok((
        nx,
        FlowState {
            u: field(0),
            v: field(1),
            q: field(2),
            time,
        },
    ))
}

/// One row per cell: indices, centre, the west/south face velocities and the
/// pressure.
pub fn write_csv(path: &Path, grid: &MacGrid, state: &FlowState) -> Result<()> {
    state.check(grid)?;
    let mut out = String::from("i,j,x,y,u,v,q\n");
    for j in 0..grid.n() {
        for i in 0..grid.n() {
            let k = grid.idx(i, j);
            let [x, y] = grid.cell_center(i, j);
            out.push_str(&format!(
                "{i},{j},{x:.12e},{y:.12e},{:.12e},{:.12e},{:.12e}\n",
                state.u[k], state.v[k], state.q[k]
            ));
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;

    #[test]
    fn snapshot_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = MacGrid::new(8, Boundary::Noslip).unwrap();
        let mut s = FlowState::zeros(&grid);
        for k in 0..grid.len() {
            s.u[k] = k as f64 * 0.5;
            s.v[k] = -(k as f64);
            s.q[k] = (k as f64).sin();
        }
        s.time = 0.125;
        let p = dir.path().join("s.bin");
        write_snapshot(&p, &grid, &s).unwrap();
        let raw = std::fs::read(&p).unwrap();
        assert_eq!(raw.len(), 32 + 3 * 8 * 64);
        assert_eq!(&raw[..8], b"LADYGRID");
        let (n, back) = read_snapshot(&p).unwrap();
        assert_eq!(n, 8);
        assert_eq!(back, s);
        write_csv(&dir.path().join("s.csv"), &grid, &s).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
        assert_eq!(csv.lines().count(), 65);
    }

    #[test]
    fn truncated_snapshot_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.bin");
        std::fs::write(&p, b"LADYGRID\x08\0\0\0").unwrap();
        assert!(matches!(read_snapshot(&p), Err(Error::Format(_))));
    }
}
