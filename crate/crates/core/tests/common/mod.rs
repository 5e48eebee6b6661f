//! Helpers shared by the integration tests.
#![allow(dead_code)]

pub mod ops;
pub mod prompts;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use mobile_operator::trace::{IterationRecord, TaskTrace, Terminal};
use mobile_operator::{
    BBox, ElementKind, Instruction, MemoryUnit, Operation, OperationRecord, PerceptionElement,
    PerceptionResult, ReflectionOutcome, StateId, TaskProgress, Verdict,
};
use serde_json::Value;

// ------------------------------------------------------------ HTTP stub

#[derive(Debug, Clone)]
pub struct Captured {
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl Captured {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

/// Serves the canned `(status, body)` responses in order, one per
/// connection, and records what it received.
pub struct Stub {
    pub url: String,
    pub requests: Arc<Mutex<Vec<Captured>>>,
    handle: Option<JoinHandle<()>>,
}

impl Stub {
    pub fn start(responses: Vec<(u16, String)>) -> Stub {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let seen = requests.clone();
        let handle = std::thread::spawn(move || {
            for (status, body) in responses {
                let Ok((stream, _)) = listener.accept() else { return };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let path = line.split_whitespace().nth(1).unwrap_or("").to_string();
                let mut headers = Vec::new();
                let mut len = 0usize;
                loop {
                    let mut h = String::new();
                    reader.read_line(&mut h).unwrap();
                    let h = h.trim_end();
                    if h.is_empty() {
                        break;
                    }
                    if let Some((k, v)) = h.split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            len = v.trim().parse().unwrap();
                        }
                        headers.push((k.trim().to_string(), v.trim().to_string()));
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                seen.lock().unwrap().push(Captured {
                    path,
                    headers,
                    body: String::from_utf8(buf).unwrap(),
                });
                let mut stream = stream;
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.flush();
            }
        });
        Stub {
            url,
            requests,
            handle: Some(handle),
        }
    }

    pub fn received(&self) -> Vec<Captured> {
        self.requests.lock().unwrap().clone()
    }

    pub fn join(mut self) -> Vec<Captured> {
        if let Some(h) = self.handle.take() {
            h.join().unwrap();
        }
        self.received()
    }
}

// ------------------------------------------------------------ traces

pub fn record(op: Operation) -> OperationRecord {
    OperationRecord {
        thought: format!("do {op}"),
        operation: op,
        description: String::new(),
    }
}

pub fn perception(elements: &[(&str, [u32; 4])]) -> PerceptionResult {
    PerceptionResult::new(
        elements
            .iter()
            .map(|(c, b)| PerceptionElement::new(ElementKind::Text, *c, BBox::from(*b)))
            .collect(),
        false,
    )
}

/// An executed iteration with the given agent and ground-truth verdicts.
pub fn executed(index: usize, op: Operation, agent: Verdict, truth: Verdict) -> IterationRecord {
    IterationRecord {
        index,
        screen_before: StateId::new(format!("s{index}")),
        perception_before: perception(&[("Target", [100, 100, 300, 300])]),
        record: Some(record(op)),
        fault: None,
        reflection: Some(ReflectionOutcome {
            verdict: agent,
            thought: String::new(),
        }),
        screen_after: Some(StateId::new(format!("s{index}'"))),
        rollback: (agent == Verdict::Erroneous).then(|| StateId::new(format!("s{index}"))),
        oracle_verdict: Some(truth),
        progress_snapshot: TaskProgress::default(),
        memory_snapshot: MemoryUnit::new(),
    }
}

pub fn stop(index: usize) -> IterationRecord {
    IterationRecord {
        index,
        screen_before: StateId::new(format!("s{index}")),
        perception_before: PerceptionResult::default(),
        record: Some(record(Operation::Stop)),
        fault: None,
        reflection: None,
        screen_after: None,
        rollback: None,
        oracle_verdict: None,
        progress_snapshot: TaskProgress::default(),
        memory_snapshot: MemoryUnit::new(),
    }
}

/// A decision that never became a valid operation.
pub fn fault(index: usize) -> IterationRecord {
    IterationRecord {
        index,
        screen_before: StateId::new(format!("s{index}")),
        perception_before: PerceptionResult::default(),
        record: None,
        fault: Some("unknown action".into()),
        reflection: Some(ReflectionOutcome {
            verdict: Verdict::Ineffective,
            thought: String::new(),
        }),
        screen_after: None,
        rollback: None,
        oracle_verdict: None,
        progress_snapshot: TaskProgress::default(),
        memory_snapshot: MemoryUnit::new(),
    }
}

/// Builds a trace through `append`, so the history follows the recording rule.
pub fn trace_of(iters: Vec<IterationRecord>, terminal: Terminal) -> TaskTrace {
    let mut t = TaskTrace::new(Instruction::new("fixture").unwrap());
    for it in iters {
        t.append(it).unwrap();
    }
    t.terminal = Some(terminal);
    t
}

// ------------------------------------------------------------ metric fixtures

/// Five ground-truth steps; four are done in order (one tap hits the same
/// element at other coordinates), one erroneous tap is rolled back and the
/// last step is never reached. CR = 4/5.
pub fn cr_fixture() -> (TaskTrace, Vec<Operation>) {
    let gt = vec![
        Operation::open_app("Notes"),
        Operation::tap(150, 150),
        Operation::swipe(500, 1500, 500, 500),
        Operation::Home,
        Operation::tap(900, 900),
    ];
    let c = Verdict::Correct;
    let e = Verdict::Erroneous;
    let trace = trace_of(
        vec![
            executed(1, Operation::open_app("Notes"), c, c),
            executed(2, Operation::tap(250, 250), c, c),
            executed(3, Operation::tap(5, 5), e, e),
            executed(4, Operation::swipe(500, 1500, 500, 500), c, c),
            executed(5, Operation::Home, c, c),
            stop(6),
        ],
        Terminal::Stopped,
    );
    (trace, gt)
}

/// 40 decisions plus a Stop: 33 judged Correct, 4 executed but wrong,
/// 3 that never produced a valid operation. DA = 33/40.
pub fn da_fixture() -> TaskTrace {
    let mut iters = Vec::new();
    for i in 1..=40 {
        iters.push(match i {
            7 | 19 | 31 => fault(i),
            3 | 11 => executed(i, Operation::tap(5, 5), Verdict::Erroneous, Verdict::Erroneous),
            15 | 27 => executed(i, Operation::tap(5, 5), Verdict::Ineffective, Verdict::Ineffective),
            _ => executed(i, Operation::tap(i as u32, 1), Verdict::Correct, Verdict::Correct),
        });
    }
    iters.push(stop(41));
    trace_of(iters, Terminal::Stopped)
}

/// Ten reflections; the agent disagrees with the ground truth once. RA = 9/10.
pub fn ra_fixture() -> TaskTrace {
    let iters = (1..=10)
        .map(|i| {
            let truth = if i % 3 == 0 { Verdict::Ineffective } else { Verdict::Correct };
            let agent = if i == 4 { Verdict::Ineffective } else { truth };
            executed(i, Operation::tap(i as u32, 2), agent, truth)
        })
        .collect();
    trace_of(iters, Terminal::MaxIterations)
}

/// Three failed ten-iteration traces, each with one wrong step, at
/// relative positions 0.1, 0.5 and 0.9.
pub fn thirds_fixture() -> Vec<TaskTrace> {
    [1usize, 5, 9]
        .into_iter()
        .map(|bad| {
            let iters = (1..=10)
                .map(|i| {
                    let v = if i == bad { Verdict::Erroneous } else { Verdict::Correct };
                    executed(i, Operation::tap(i as u32, 3), v, v)
                })
                .collect();
            trace_of(iters, Terminal::MaxIterations)
        })
        .collect()
}

// ------------------------------------------------------------ independent recomputation

/// Per-task numbers recomputed straight from trace-file JSON.
#[derive(Debug, Clone, PartialEq)]
pub struct Recount {
    pub cr: f64,
    pub decisions: usize,
    pub correct_decisions: usize,
    pub reflections: usize,
    pub agreeing_reflections: usize,
    /// Relative position (index / length) of every judged non-Correct step.
    pub error_positions: Vec<f64>,
}

fn op_text(v: &Value) -> Option<String> {
    v.pointer("/record/operation").and_then(Value::as_str).map(str::to_string)
}

fn tap_point(s: &str) -> Option<(i64, i64)> {
    let rest = s.strip_prefix("Tap (")?.strip_suffix(')')?;
    let (x, y) = rest.split_once(',')?;
    Some((x.trim().parse().ok()?, y.trim().parse().ok()?))
}

fn element_index(perception: &Value, (x, y): (i64, i64)) -> Option<usize> {
    perception["elements"].as_array()?.iter().position(|e| {
        let b: Vec<i64> = e["bbox"]
            .as_array()
            .map(|a| a.iter().filter_map(Value::as_i64).collect())
            .unwrap_or_default();
        b.len() == 4 && b[0] <= x && x < b[2] && b[1] <= y && y < b[3]
    })
}

/// Walks the JSON lines of a trace file. Uses a memoised recursion for
/// the in-order match count rather than a table.
pub fn recount(trace_jsonl: &str, ground_truth: &[&str]) -> Recount {
    let lines: Vec<Value> = trace_jsonl
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let iters: Vec<&Value> = lines.iter().filter(|v| v["kind"] == "iteration").collect();
    let mut r = Recount {
        cr: 0.0,
        decisions: 0,
        correct_decisions: 0,
        reflections: 0,
        agreeing_reflections: 0,
        error_positions: Vec::new(),
    };
    let mut done: Vec<(String, &Value)> = Vec::new();
    for it in &iters {
        let op = op_text(it);
        let has_fault = !it["fault"].is_null();
        let is_stop = !has_fault && op.as_deref() == Some("Stop");
        let executed = !it["screen_after"].is_null();
        let agent = it.pointer("/reflection/verdict").and_then(Value::as_str);
        let truth = it.get("oracle_verdict").and_then(Value::as_str);
        if !is_stop {
            r.decisions += 1;
            if executed && truth == Some("Correct") {
                r.correct_decisions += 1;
            }
        }
        if agent.is_some() && !has_fault {
            r.reflections += 1;
            if agent == truth {
                r.agreeing_reflections += 1;
            }
        }
        let judged = truth.or(agent);
        if judged.is_some_and(|v| v != "Correct") {
            let pos = it["index"].as_u64().unwrap() as f64 / iters.len() as f64;
            r.error_positions.push(pos);
        }
        if executed && judged == Some("Correct") {
            done.push((op.unwrap(), &it["perception_before"]));
        }
    }
    let matches = |g: &str, (op, perc): &(String, &Value)| -> bool {
        match (tap_point(g), tap_point(op)) {
            (Some(gp), Some(p)) => match (element_index(perc, gp), element_index(perc, p)) {
                (Some(a), Some(b)) => a == b,
                _ => gp == p,
            },
            _ => g == op,
        }
    };
    fn best(
        i: usize,
        j: usize,
        gt: &[&str],
        done: &[(String, &Value)],
        m: &dyn Fn(&str, &(String, &Value)) -> bool,
        memo: &mut std::collections::HashMap<(usize, usize), usize>,
    ) -> usize {
        if i == gt.len() || j == done.len() {
            return 0;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let mut v = best(i + 1, j, gt, done, m, memo).max(best(i, j + 1, gt, done, m, memo));
        if m(gt[i], &done[j]) {
            v = v.max(1 + best(i + 1, j + 1, gt, done, m, memo));
        }
        memo.insert((i, j), v);
        v
    }
    let mut memo = std::collections::HashMap::new();
    let matched = best(0, 0, ground_truth, &done, &matches, &mut memo);
    r.cr = matched as f64 / ground_truth.len() as f64;
    r
}

/// Early/mid/late counts from relative positions, thirds of `[0, 1]`.
pub fn bucket_positions(positions: &[f64]) -> (usize, usize, usize) {
    let mut out = (0, 0, 0);
    for &p in positions {
        if p < 1.0 / 3.0 {
            out.0 += 1;
        } else if p < 2.0 / 3.0 {
            out.1 += 1;
        } else {
            out.2 += 1;
        }
    }
    out
}
