//! Line protocol for black-box models running in a child process.
//!
//! ```text
//! > XAIP/1 predict_proba N L
//! < OK [concurrent]
//! > BATCH k
//! > k lines of N*L comma-separated reals
//! < k lines, one probability each
//! > END
//! ```

use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use super::{InputShape, Predictor};
use crate::{Error, Result};

pub const MAGIC: &str = "XAIP/1";
/// Rows per request. Bounded so neither side fills a pipe while the other is writing.
const MAX_BATCH: usize = 1024;

pub fn handshake_line(shape: InputShape) -> String {
    format!("{MAGIC} predict_proba {} {}", shape.n_features, shape.window_length)
}

struct Session {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    broken: bool,
}

/// Client end of the protocol. Requests are serialized through one pipe pair.
pub struct ExternalPredictor {
    command: Vec<String>,
    shape: InputShape,
    concurrent: bool,
    session: Mutex<Session>,
}

impl fmt::Debug for ExternalPredictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExternalPredictor")
            .field("command", &self.command)
            .field("shape", &self.shape)
            .field("concurrent", &self.concurrent)
            .finish()
    }
}

fn transport(msg: impl Into<String>) -> Error {
    Error::Transport(msg.into())
}

fn read_reply(stdout: &mut impl BufRead) -> Result<String> {
    let mut line = String::new();
    let n = stdout
        .read_line(&mut line)
        .map_err(|e| transport(format!("read failed: {e}")))?;
    if n == 0 {
        return Err(transport("child closed its output"));
    }
    let line = line.trim_end_matches(['\n', '\r']).to_string();
    if let Some(rest) = line.strip_prefix("ERR") {
        return Err(transport(format!("child reported: {}", rest.trim())));
    }
    Ok(line)
}

impl ExternalPredictor {
    pub fn spawn(command: &[String], shape: InputShape) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::InvalidArgument("external model command is empty".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| transport(format!("cannot start `{program}`: {e}")))?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut session = Session { child, stdin, stdout, broken: false };
        let reply = (|| {
            writeln!(session.stdin, "{}", handshake_line(shape))
                .and_then(|_| session.stdin.flush())
                .map_err(|e| transport(format!("handshake write failed: {e}")))?;
            read_reply(&mut session.stdout)
        })();
        let concurrent = match reply.as_deref() {
            Ok("OK") => false,
            Ok("OK concurrent") => true,
            Ok(other) => {
                let _ = session.child.kill();
                return Err(transport(format!("unexpected handshake reply `{other}`")));
            }
            Err(_) => {
                let _ = session.child.kill();
                return reply.map(|_| unreachable!());
            }
        };
        Ok(Self {
            command: command.to_vec(),
            shape,
            concurrent,
            session: Mutex::new(session),
        })
    }

    pub fn command(&self) -> &[String] {
        &self.command
    }

    /// Whether the child declared batch concurrency. Recorded only; requests
    /// still share one pipe pair.
    pub fn concurrent(&self) -> bool {
        self.concurrent
    }

    fn request(session: &mut Session, rows: &[f64], cols: usize) -> Result<Vec<f64>> {
        let k = rows.len() / cols;
        let io = |e: std::io::Error| transport(format!("write failed: {e}"));
        writeln!(session.stdin, "BATCH {k}").map_err(io)?;
        for row in rows.chunks_exact(cols) {
            let mut line = String::with_capacity(cols * 8);
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&v.to_string());
            }
            writeln!(session.stdin, "{line}").map_err(io)?;
        }
        session.stdin.flush().map_err(io)?;
        let mut out = Vec::with_capacity(k);
        for _ in 0..k {
            let line = read_reply(&mut session.stdout)?;
            let p: f64 = line
                .trim()
                .parse()
                .map_err(|_| transport(format!("`{line}` is not a probability")))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(transport(format!("probability {p} outside [0, 1]")));
            }
            out.push(p);
        }
        Ok(out)
    }
}

impl Predictor for ExternalPredictor {
    fn input_shape(&self) -> InputShape {
        self.shape
    }

    fn predict_rows(&self, rows: &[f64]) -> Result<Vec<f64>> {
        let cols = self.shape.columns();
        let mut session = self.session.lock().unwrap_or_else(|p| p.into_inner());
        if session.broken {
            return Err(transport("session is unusable after an earlier failure"));
        }
        let mut out = Vec::with_capacity(rows.len() / cols);
        for chunk in rows.chunks(MAX_BATCH * cols) {
            match Self::request(&mut session, chunk, cols) {
                Ok(p) => out.extend(p),
                Err(e) => {
                    session.broken = true;
                    return Err(e);
                }
            }
        }
        Ok(out)
    }
}

impl Drop for ExternalPredictor {
    fn drop(&mut self) {
        let session = self.session.get_mut().unwrap_or_else(|p| p.into_inner());
        let _ = writeln!(session.stdin, "END").and_then(|_| session.stdin.flush());
        let deadline = Instant::now() + Duration::from_secs(2);
        loop {
            match session.child.try_wait() {
                Ok(Some(_)) => return,
                Ok(None) if Instant::now() < deadline => std::thread::sleep(Duration::from_millis(10)),
                _ => {
                    let _ = session.child.kill();
                    let _ = session.child.wait();
                    return;
                }
            }
        }
    }
}

/// Server end: answers requests for `predictor` until `END` or end of input.
pub fn serve<P: Predictor + ?Sized>(predictor: &P, input: impl BufRead, mut output: impl Write) -> Result<()> {
    let shape = predictor.input_shape();
    let cols = shape.columns();
    let io = |e: std::io::Error| transport(format!("serve: {e}"));
    let mut lines = input.lines();
    let hello = lines.next().transpose().map_err(io)?.unwrap_or_default();
    if hello.trim() != handshake_line(shape) {
        writeln!(output, "ERR expected `{}`", handshake_line(shape)).map_err(io)?;
        output.flush().map_err(io)?;
        return Err(transport(format!("bad handshake `{}`", hello.trim())));
    }
    writeln!(output, "OK").map_err(io)?;
    output.flush().map_err(io)?;
    while let Some(line) = lines.next().transpose().map_err(io)? {
        let line = line.trim();
        if line == "END" {
            break;
        }
        if line.is_empty() {
            continue;
        }
        let Some(k) = line.strip_prefix("BATCH ").and_then(|k| k.trim().parse::<usize>().ok()) else {
            writeln!(output, "ERR unknown request `{line}`").map_err(io)?;
            output.flush().map_err(io)?;
            continue;
        };
        let mut rows = Vec::with_capacity(k * cols);
        let mut problem = None;
        for r in 0..k {
            let Some(row) = lines.next().transpose().map_err(io)? else {
                return Err(transport("input ended inside a batch"));
            };
            if problem.is_some() {
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> = row.trim().split(',').map(|v| v.trim().parse::<f64>()).collect();
            match parsed {
                Ok(v) if v.len() == cols => rows.extend(v),
                Ok(v) => problem = Some(format!("row {r} has {} values, expected {cols}", v.len())),
                Err(e) => problem = Some(format!("row {r}: {e}")),
            }
        }
        let reply = match problem {
            Some(p) => Err(p),
            None => predictor.predict_rows(&rows).map_err(|e| e.to_string()),
        };
        match reply {
            Ok(ps) => {
                for p in ps {
                    writeln!(output, "{p}").map_err(io)?;
                }
            }
            Err(msg) => writeln!(output, "ERR {msg}").map_err(io)?,
        }
        output.flush().map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predict::FnPredictor;
    use std::io::Cursor;

    #[test]
    fn serve_answers_batches() {
        let p = FnPredictor::new(InputShape::new(1, 2), |r| (r[0] + r[1]) / 10.0);
        let input = "XAIP/1 predict_proba 1 2\nBATCH 2\n1,2\n0.5,0.25\nBATCH 1\n1\nEND\n";
        let mut out = Vec::new();
        serve(&p, Cursor::new(input), &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "OK");
        assert_eq!(lines[1].parse::<f64>().unwrap(), 0.3);
        assert_eq!(lines[2].parse::<f64>().unwrap(), 0.075);
        assert!(lines[3].starts_with("ERR"));
    }

    #[test]
    fn serve_rejects_wrong_shape() {
        let p = FnPredictor::new(InputShape::new(1, 2), |_| 0.5);
        let mut out = Vec::new();
        assert!(serve(&p, Cursor::new("XAIP/1 predict_proba 2 2\n"), &mut out).is_err());
        assert!(String::from_utf8(out).unwrap().starts_with("ERR"));
    }

    fn sh(script: &str) -> Vec<String> {
        vec!["sh".into(), "-c".into(), script.into()]
    }

    #[test]
    fn client_talks_to_shell_child() {
        let script = r#"read h; echo "OK concurrent"; while read cmd k; do [ "$cmd" = END ] && exit 0; i=0; while [ $i -lt $k ]; do read line; echo 0.25; i=$((i+1)); done; done"#;
        let ext = ExternalPredictor::spawn(&sh(script), InputShape::new(2, 1)).unwrap();
        assert!(ext.concurrent());
        let rows: Vec<f64> = (0..2 * 1500).map(f64::from).collect();
        let out = ext.predict_rows(&rows).unwrap();
        assert_eq!(out.len(), 1500);
        assert!(out.iter().all(|&p| p == 0.25));
    }

    #[test]
    fn bad_replies_are_transport_errors() {
        let script = r#"read h; echo OK; read b; read r; echo 1.5"#;
        let ext = ExternalPredictor::spawn(&sh(script), InputShape::new(1, 1)).unwrap();
        assert!(matches!(ext.predict_rows(&[0.0]), Err(Error::Transport(_))));
        assert!(matches!(ext.predict_rows(&[0.0]), Err(Error::Transport(_))));
        let refuse = sh("read h; echo NO");
        assert!(matches!(ExternalPredictor::spawn(&refuse, InputShape::new(1, 1)), Err(Error::Transport(_))));
    }
}
