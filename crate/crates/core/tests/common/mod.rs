#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

/// What the mock does with one request.
#[derive(Clone)]
pub enum Reply {
    Json(u16, String),
    /// Sleep, then answer.
    Delay(Duration, u16, String),
    /// Drop the connection without answering.
    Hangup,
}

#[derive(Debug, Clone)]
pub struct Seen {
    pub method: String,
    pub path: String,
    pub body: String,
}

/// One-shot HTTP server answering requests in order from a script; the
/// last reply repeats once the script runs out.
pub struct MockJudge {
    pub endpoint: String,
    pub seen: Arc<Mutex<Vec<Seen>>>,
    _handle: JoinHandle<()>,
}

impl MockJudge {
    pub fn start(script: Vec<Reply>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let endpoint = format!("http://{}", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&seen);
        let handle = thread::spawn(move || {
            let mut i = 0;
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { return };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut line = String::new();
                if reader.read_line(&mut line).is_err() || line.is_empty() {
                    continue;
                }
                let mut parts = line.split_whitespace();
                let method = parts.next().unwrap_or_default().to_string();
                let path = parts.next().unwrap_or_default().to_string();
                let mut length = 0;
                loop {
                    let mut h = String::new();
                    reader.read_line(&mut h).unwrap();
                    if h == "\r\n" || h.is_empty() {
                        break;
                    }
                    if let Some((k, v)) = h.split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            length = v.trim().parse().unwrap();
                        }
                    }
                }
                let mut body = vec![0; length];
                reader.read_exact(&mut body).unwrap();
                log.lock().unwrap().push(Seen {
                    method,
                    path,
                    body: String::from_utf8(body).unwrap(),
                });
                let reply = script[i.min(script.len() - 1)].clone();
                i += 1;
                thread::spawn(move || {
                    let (status, text) = match reply {
                        Reply::Json(s, t) => (s, t),
                        Reply::Delay(d, s, t) => {
                            thread::sleep(d);
                            (s, t)
                        }
                        Reply::Hangup => return,
                    };
                    let response = format!(
                        "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{text}",
                        text.len()
                    );
                    let _ = stream.write_all(response.as_bytes());
                });
            }
        });
        Self {
            endpoint,
            seen,
            _handle: handle,
        }
    }

    pub fn requests(&self) -> Vec<Seen> {
        self.seen.lock().unwrap().clone()
    }
}

pub fn health_ok() -> Reply {
    Reply::Json(200, r#"{"status":"ok","model":"mock"}"#.into())
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Compares `actual` with a golden file. `TIDES_BLESS=1` rewrites it.
pub fn check_golden(name: &str, actual: &[u8]) {
    let path = golden_dir().join(name);
    if std::env::var_os("TIDES_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e} (run with TIDES_BLESS=1)", path.display()));
    assert!(expected == actual, "{} differs from golden", path.display());
}

/// Unit-modulus plane-stress element by 2x2 Gauss quadrature of `B^T D B`,
/// local nodes `(0,0), (1,0), (1,1), (0,1)` with y downward.
pub fn quadrature_element(nu: f64) -> [[f64; 8]; 8] {
    let c = 1.0 / (1.0 - nu * nu);
    let d = [[c, c * nu, 0.0], [c * nu, c, 0.0], [0.0, 0.0, c * (1.0 - nu) / 2.0]];
    let nodes = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
    let g = 0.5 / 3f64.sqrt();
    let mut ke = [[0.0; 8]; 8];
    for x in [0.5 - g, 0.5 + g] {
        for y in [0.5 - g, 0.5 + g] {
            let mut b = [[0.0; 8]; 3];
            for (i, &(xi, yi)) in nodes.iter().enumerate() {
                let (sx, fx) = if xi == 0.0 { (-1.0, 1.0 - x) } else { (1.0, x) };
                let (sy, fy) = if yi == 0.0 { (-1.0, 1.0 - y) } else { (1.0, y) };
                b[0][2 * i] = sx * fy;
                b[1][2 * i + 1] = sy * fx;
                b[2][2 * i] = sy * fx;
                b[2][2 * i + 1] = sx * fy;
            }
            for r in 0..8 {
                for s in 0..8 {
                    for p in 0..3 {
                        for q in 0..3 {
                            ke[r][s] += 0.25 * b[p][r] * d[p][q] * b[q][s];
                        }
                    }
                }
            }
        }
    }
    ke
}

/// Dense assembly with its own connectivity (nodes column-major, elements
/// row-major) and LU on the free block. Returns displacements, total and
/// per-element compliance.
pub fn dense_fem(
    nx: usize,
    ny: usize,
    densities: &[f64],
    forces: &[f64],
    fixed: &[bool],
    (e0, e_min, nu, p): (f64, f64, f64, f64),
) -> (Vec<f64>, f64, Vec<f64>) {
    use nalgebra::{DMatrix, DVector};
    let k0 = quadrature_element(nu);
    let n = 2 * (nx + 1) * (ny + 1);
    let node = |ix: usize, iy: usize| ix * (ny + 1) + iy;
    let dofs_of = |ix: usize, iy: usize| {
        let corners = [(ix, iy), (ix + 1, iy), (ix + 1, iy + 1), (ix, iy + 1)];
        let mut dofs = [0usize; 8];
        for (c, &(cx, cy)) in corners.iter().enumerate() {
            dofs[2 * c] = 2 * node(cx, cy);
            dofs[2 * c + 1] = 2 * node(cx, cy) + 1;
        }
        dofs
    };
    let modulus = |e: usize| e_min + densities[e].powf(p) * (e0 - e_min);
    let mut k = DMatrix::<f64>::zeros(n, n);
    for iy in 0..ny {
        for ix in 0..nx {
            let dofs = dofs_of(ix, iy);
            let e = modulus(iy * nx + ix);
            for a in 0..8 {
                for b in 0..8 {
                    k[(dofs[a], dofs[b])] += e * k0[a][b];
                }
            }
        }
    }
    let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
    let kff = DMatrix::from_fn(free.len(), free.len(), |r, c| k[(free[r], free[c])]);
    let ff = DVector::from_iterator(free.len(), free.iter().map(|&i| forces[i]));
    let uf = kff.lu().solve(&ff).expect("nonsingular free block");
    let mut u = vec![0.0; n];
    for (r, &i) in free.iter().enumerate() {
        u[i] = uf[r];
    }
    let mut per_element = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let dofs = dofs_of(ix, iy);
            let mut q = 0.0;
            for a in 0..8 {
                for b in 0..8 {
                    q += u[dofs[a]] * k0[a][b] * u[dofs[b]];
                }
            }
            per_element.push(modulus(iy * nx + ix) * q);
        }
    }
    let total = forces.iter().zip(&u).map(|(f, x)| f * x).sum();
    (u, total, per_element)
}
