//! Planner wire protocol v1 and the subprocess planner runner.
//!
//! Messages are single-line JSON objects on the planner's stdin/stdout. The
//! runner opens with a handshake, then sends one request at a time and
//! blocks for the matching response.

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use planshape_core::env::{EnvId, EnvSpec, LbfConfig, MpeConfig};
use planshape_core::{plan_reference, AssignmentVector, InterpretedState, PlanError, Planner};
use serde::{Deserialize, Serialize};

pub const PROTOCOL: &str = "yolo-marl-plan/1";
pub const DEFAULT_TIMEOUT_MS: u64 = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Handshake {
    pub protocol: String,
    pub env: String,
    pub n_agents: usize,
    pub assignment_set: Vec<String>,
}

impl Handshake {
    pub fn for_spec(spec: &EnvSpec) -> Self {
        Self {
            protocol: PROTOCOL.to_string(),
            env: spec.env_id.as_str().to_string(),
            n_agents: spec.n_agents,
            assignment_set: spec.assignment_labels(),
        }
    }

    /// Rebuilds an environment spec from the handshake fields. Only the
    /// quantities a planner can observe are recovered: agent and target
    /// counts. LBF grid size is the default.
    pub fn spec(&self) -> Result<EnvSpec, PlanError> {
        if self.protocol != PROTOCOL {
            return Err(PlanError::Protocol(format!("unsupported protocol {:?}", self.protocol)));
        }
        let env = EnvId::parse(&self.env)
            .ok_or_else(|| PlanError::Protocol(format!("unknown env {:?}", self.env)))?;
        let spec = match env {
            EnvId::Lbf => {
                let n_foods = self.assignment_set.iter().filter(|l| l.starts_with("Food")).count();
                LbfConfig {
                    n_agents: self.n_agents,
                    n_foods,
                    agent_levels: vec![1; self.n_agents],
                    ..LbfConfig::default()
                }
                .spec()
            }
            EnvId::MpeSpread => MpeConfig { n_agents: self.n_agents, ..MpeConfig::default() }.spec(),
        };
        if spec.assignment_labels() != self.assignment_set {
            return Err(PlanError::Protocol("assignment set does not match the environment".into()));
        }
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub seq: u64,
    pub state: InterpretedState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub seq: u64,
    pub assignments: Vec<String>,
}

/// How to launch a planner process.
#[derive(Clone, Debug, PartialEq)]
pub struct PlannerCommand {
    pub program: PathBuf,
    pub args: Vec<String>,
}

impl PlannerCommand {
    pub fn new(program: impl Into<PathBuf>, args: &[&str]) -> Self {
        Self { program: program.into(), args: args.iter().map(|s| s.to_string()).collect() }
    }
}

/// Planner session running in a child process.
///
/// One request is in flight at a time. A timeout or protocol error leaves
/// the session unusable; callers restart it with [`SubprocessPlanner::spawn`].
pub struct SubprocessPlanner {
    spec: EnvSpec,
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    seq: u64,
    timeout: Duration,
    broken: bool,
}

impl SubprocessPlanner {
    /// Starts the process and performs the handshake.
    pub fn spawn(cmd: &PlannerCommand, spec: &EnvSpec, timeout_ms: u64) -> Result<Self, PlanError> {
        let mut child = Command::new(&cmd.program)
            .args(&cmd.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| PlanError::Crashed(format!("cannot start {}: {e}", cmd.program.display())))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let mut planner = Self {
            spec: spec.clone(),
            child,
            stdin,
            lines,
            seq: 0,
            timeout: Duration::from_millis(timeout_ms),
            broken: false,
        };
        planner.send(&Handshake::for_spec(spec))?;
        let line = planner.recv()?;
        let ack: Ack = serde_json::from_str(&line)
            .map_err(|e| planner.fail(PlanError::Protocol(format!("bad handshake reply: {e}"))))?;
        if !ack.ok {
            return Err(planner.fail(PlanError::Protocol("planner rejected the handshake".into())));
        }
        Ok(planner)
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn is_broken(&self) -> bool {
        self.broken
    }

    fn fail(&mut self, e: PlanError) -> PlanError {
        self.broken = true;
        let _ = self.child.kill();
        e
    }

    fn send<T: Serialize>(&mut self, msg: &T) -> Result<(), PlanError> {
        let mut line = serde_json::to_string(msg).expect("protocol messages serialize");
        line.push('\n');
        if let Err(e) = self.stdin.write_all(line.as_bytes()).and_then(|_| self.stdin.flush()) {
            return Err(self.fail(PlanError::Crashed(format!("write to planner failed: {e}"))));
        }
        Ok(())
    }

    fn recv(&mut self) -> Result<String, PlanError> {
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(self.fail(PlanError::Crashed(format!("read from planner failed: {e}")))),
            Err(RecvTimeoutError::Timeout) => {
                let ms = self.timeout.as_millis() as u64;
                Err(self.fail(PlanError::Timeout(ms)))
            }
            Err(RecvTimeoutError::Disconnected) => {
                let status = self.child.wait().map(|s| s.to_string()).unwrap_or_default();
                Err(self.fail(PlanError::Crashed(format!("planner exited ({status})"))))
            }
        }
    }

    /// Sends one request and parses the matching response.
    pub fn request(&mut self, state: &InterpretedState) -> Result<AssignmentVector, PlanError> {
        if self.broken {
            return Err(PlanError::Protocol("session is no longer usable".into()));
        }
        self.seq += 1;
        let seq = self.seq;
        self.send(&Request { seq, state: state.clone() })?;
        let line = self.recv()?;
        let resp: Response = serde_json::from_str(&line)
            .map_err(|e| self.fail(PlanError::Protocol(format!("malformed response: {e}"))))?;
        if resp.seq != seq {
            return Err(self.fail(PlanError::Protocol(format!(
                "response seq {} does not echo request seq {seq}",
                resp.seq
            ))));
        }
        // label errors leave the stream in sync, so the session stays usable
        AssignmentVector::from_labels(&resp.assignments, &self.spec)
    }
}

impl Planner for SubprocessPlanner {
    fn plan(&mut self, state: &InterpretedState) -> Result<AssignmentVector, PlanError> {
        self.request(state)
    }
}

impl Drop for SubprocessPlanner {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Serves the reference planner over the protocol until `input` closes.
pub fn serve_reference<R: BufRead, W: Write>(input: R, mut output: W) -> Result<(), PlanError> {
    let io = |e: std::io::Error| PlanError::Crashed(e.to_string());
    let mut lines = input.lines();
    let Some(first) = lines.next() else { return Ok(()) };
    let handshake: Handshake = serde_json::from_str(&first.map_err(io)?)
        .map_err(|e| PlanError::Protocol(format!("bad handshake: {e}")))?;
    let spec = handshake.spec()?;
    writeln!(output, "{}", serde_json::to_string(&Ack { ok: true }).unwrap()).map_err(io)?;
    output.flush().map_err(io)?;
    for line in lines {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let req: Request = serde_json::from_str(&line)
            .map_err(|e| PlanError::Protocol(format!("bad request: {e}")))?;
        let assignments = plan_reference(&req.state, &spec).0.iter().map(|a| a.label()).collect();
        let resp = Response { seq: req.seq, assignments };
        writeln!(output, "{}", serde_json::to_string(&resp).unwrap()).map_err(io)?;
        output.flush().map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use planshape_core::{interpret, Env, EnvConfig};

    #[test]
    fn handshake_round_trips_spec() {
        for cfg in [EnvConfig::Lbf(LbfConfig::default()), EnvConfig::MpeSpread(MpeConfig::default())] {
            let spec = cfg.spec();
            let hs = Handshake::for_spec(&spec);
            assert_eq!(hs.spec().unwrap().assignment_set, spec.assignment_set);
        }
    }

    #[test]
    fn handshake_wire_shape() {
        let spec = EnvConfig::Lbf(LbfConfig::default()).spec();
        let v = serde_json::to_value(Handshake::for_spec(&spec)).unwrap();
        assert_eq!(
            v,
            serde_json::json!({
                "protocol": "yolo-marl-plan/1",
                "env": "lbf",
                "n_agents": 2,
                "assignment_set": ["None", "Food0", "Food1", "Load"],
            })
        );
    }

    #[test]
    fn in_memory_server_answers_in_order() {
        let cfg = EnvConfig::Lbf(LbfConfig::default());
        let spec = cfg.spec();
        let mut env = Env::new(&cfg).unwrap();
        let state = interpret(&env.reset(3).unwrap(), &spec).unwrap();
        let mut input = serde_json::to_string(&Handshake::for_spec(&spec)).unwrap() + "\n";
        for seq in [1, 2] {
            input += &(serde_json::to_string(&Request { seq, state: state.clone() }).unwrap() + "\n");
        }
        let mut out = Vec::new();
        serve_reference(input.as_bytes(), &mut out).unwrap();
        let out = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], r#"{"ok":true}"#);
        let expected: Vec<String> = plan_reference(&state, &spec).0.iter().map(|a| a.label()).collect();
        for (k, line) in lines[1..].iter().enumerate() {
            let r: Response = serde_json::from_str(line).unwrap();
            assert_eq!(r.seq, k as u64 + 1);
            assert_eq!(r.assignments, expected);
        }
    }
}
