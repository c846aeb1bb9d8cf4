//! Shared test oracles, written independently of the library internals so
//! disagreements point at real bugs rather than shared assumptions.

#![allow(dead_code)]

use std::collections::{HashMap, HashSet, VecDeque};
use std::io::{Read as _, Write as _};
use std::net::TcpListener;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

/// A toy CFG over single-byte terminals: productions only, no lexer layer.
/// Nonterminal 0 is the start symbol.
#[derive(Clone)]
pub enum Sym {
    T(u8),
    N(usize),
}

pub struct ToyCfg {
    pub prods: Vec<(usize, Vec<Sym>)>,
}

impl ToyCfg {
    /// Every string of length <= max_len derivable from the start symbol,
    /// found by breadth-first expansion of sentential forms. Exponential in
    /// the worst case; fine for toy grammars.
    pub fn enumerate(&self, max_len: usize) -> HashSet<Vec<u8>> {
        let mut out: HashSet<Vec<u8>> = HashSet::new();
        let mut seen: HashSet<Vec<u16>> = HashSet::new();
        // Encode sentential forms compactly: terminal b -> b, nonterminal n
        // -> 256 + n.
        let start = vec![256u16];
        let mut queue: VecDeque<Vec<u16>> = VecDeque::new();
        seen.insert(start.clone());
        queue.push_back(start);
        while let Some(form) = queue.pop_front() {
            let term_count = form.iter().filter(|&&s| s < 256).count();
            if term_count > max_len {
                continue;
            }
            match form.iter().position(|&s| s >= 256) {
                None => {
                    out.insert(form.iter().map(|&s| s as u8).collect());
                }
                Some(i) => {
                    let nt = (form[i] - 256) as usize;
                    for (lhs, rhs) in &self.prods {
                        if *lhs != nt {
                            continue;
                        }
                        let mut next = Vec::with_capacity(form.len() + rhs.len());
                        next.extend_from_slice(&form[..i]);
                        for s in rhs {
                            next.push(match s {
                                Sym::T(b) => *b as u16,
                                Sym::N(n) => 256 + *n as u16,
                            });
                        }
                        next.extend_from_slice(&form[i + 1..]);
                        let terms = next.iter().filter(|&&s| s < 256).count();
                        if terms <= max_len && seen.insert(next.clone()) {
                            queue.push_back(next);
                        }
                    }
                }
            }
        }
        out
    }

    /// True when some string with the given prefix and total length
    /// <= bound is derivable.
    pub fn completable(&self, prefix: &[u8], bound: usize) -> bool {
        self.enumerate(bound)
            .iter()
            .any(|s| s.len() >= prefix.len() && s.starts_with(prefix))
    }
}

/// Second Turing machine simulator, deliberately structured differently from
/// the library's: string-keyed transition lookup resolved per step, tapes as
/// grow-on-demand maps.
pub struct OracleTm {
    states: Vec<String>,
    alphabet: Vec<String>,
    blank: String,
    tapes: usize,
    start: String,
    halt: String,
    // (state, reads) resolved most-specific-first at lookup time.
    rules: Vec<(String, Vec<String>, String, Vec<String>, Vec<i64>)>,
}

impl OracleTm {
    pub fn from_json(text: &str) -> OracleTm {
        let v: serde_json::Value = serde_json::from_str(text).unwrap();
        let arr = |k: &str| -> Vec<String> {
            v[k].as_array()
                .unwrap()
                .iter()
                .map(|s| s.as_str().unwrap().to_string())
                .collect()
        };
        let work = v["work_tapes"].as_u64().unwrap() as usize;
        let mut rules = Vec::new();
        for t in v["transitions"].as_array().unwrap() {
            rules.push((
                t["state"].as_str().unwrap().to_string(),
                t["reads"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|s| s.as_str().unwrap().to_string())
                    .collect(),
                t["next"].as_str().unwrap().to_string(),
                t["writes"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|s| s.as_str().unwrap().to_string())
                    .collect(),
                t["moves"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|m| m.as_i64().unwrap())
                    .collect(),
            ));
        }
        OracleTm {
            states: arr("states"),
            alphabet: arr("tape_alphabet"),
            blank: v["blank"].as_str().unwrap().to_string(),
            tapes: work + 2,
            start: v["start_state"].as_str().unwrap().to_string(),
            halt: v["halt_state"].as_str().unwrap().to_string(),
            rules,
        }
    }

    fn pick(&self, state: &str, reads: &[String]) -> Option<usize> {
        let mut best: Option<(usize, usize)> = None; // (wildcards, idx)
        for (i, (st, rd, _, _, _)) in self.rules.iter().enumerate() {
            if st != state || rd.len() != reads.len() {
                continue;
            }
            let mut wild = 0;
            let mut ok = true;
            for (want, have) in rd.iter().zip(reads) {
                if want == "*" {
                    wild += 1;
                } else if want != have {
                    ok = false;
                    break;
                }
            }
            if !ok {
                continue;
            }
            match best {
                Some((w, _)) if w <= wild => {}
                _ => best = Some((wild, i)),
            }
        }
        best.map(|(_, i)| i)
    }

    /// Returns (output, steps). Panics on a table hole or missing halt, which
    /// the fixtures never trigger.
    pub fn run(&self, input: &str, budget: usize) -> (String, usize) {
        assert!(self.states.contains(&self.start) && self.states.contains(&self.halt));
        let mut tapes: Vec<HashMap<i64, String>> = vec![HashMap::new(); self.tapes];
        let mut heads = vec![0i64; self.tapes];
        // Longest-symbol-first tokenization of the input text.
        let mut syms: Vec<String> = self.alphabet.clone();
        syms.sort_by_key(|s| std::cmp::Reverse(s.len()));
        let mut rest = input;
        let mut pos = 0i64;
        while !rest.is_empty() {
            let sym = syms
                .iter()
                .find(|s| !s.is_empty() && rest.starts_with(s.as_str()))
                .unwrap_or_else(|| panic!("cannot read input {:?}", rest));
            tapes[0].insert(pos, sym.clone());
            pos += 1;
            rest = &rest[sym.len()..];
        }
        let mut state = self.start.clone();
        let mut steps = 0;
        while state != self.halt {
            assert!(steps < budget, "oracle budget exceeded");
            let reads: Vec<String> = (0..self.tapes)
                .map(|t| tapes[t].get(&heads[t]).cloned().unwrap_or(self.blank.clone()))
                .collect();
            let idx = self
                .pick(&state, &reads)
                .unwrap_or_else(|| panic!("no rule for {} {:?}", state, reads));
            let (_, _, next, writes, moves) = self.rules[idx].clone();
            for (j, w) in writes.iter().enumerate() {
                let tape = j + 1; // input tape is read-only
                let sym = if w == "*" { reads[tape].clone() } else { w.clone() };
                if sym == self.blank {
                    tapes[tape].remove(&heads[tape]);
                } else {
                    tapes[tape].insert(heads[tape], sym);
                }
            }
            for (t, m) in moves.iter().enumerate() {
                heads[t] += m;
            }
            state = next;
            steps += 1;
        }
        let out_tape = self.tapes - 1;
        let mut out = String::new();
        let mut p = heads[out_tape];
        while let Some(sym) = tapes[out_tape].get(&p) {
            out.push_str(sym);
            p += 1;
        }
        (out, steps)
    }
}

/// Minimal single-threaded HTTP 1.1 server for the remote-model tests.
/// Routes are matched on the request line only; each connection serves one
/// request. `delay` simulates a slow upstream.
pub struct TestHttpServer {
    pub base_url: String,
    stop: Arc<AtomicBool>,
    handle: Option<thread::JoinHandle<()>>,
}

impl TestHttpServer {
    pub fn start(
        routes: Vec<(&'static str, String)>,
        delay: Option<Duration>,
    ) -> TestHttpServer {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        listener.set_nonblocking(true).unwrap();
        let stop = Arc::new(AtomicBool::new(false));
        let stop2 = stop.clone();
        let routes: Vec<(String, String)> = routes
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let handle = thread::spawn(move || {
            while !stop2.load(Ordering::Relaxed) {
                match listener.accept() {
                    Ok((mut sock, _)) => {
                        sock.set_read_timeout(Some(Duration::from_millis(500))).ok();
                        let mut buf = Vec::new();
                        let mut tmp = [0u8; 4096];
                        // Read until the headers and any content-length body
                        // are in.
                        loop {
                            match sock.read(&mut tmp) {
                                Ok(0) => break,
                                Ok(n) => {
                                    buf.extend_from_slice(&tmp[..n]);
                                    if request_complete(&buf) {
                                        break;
                                    }
                                }
                                Err(_) => break,
                            }
                        }
                        if let Some(d) = delay {
                            thread::sleep(d);
                        }
                        let line = buf
                            .split(|&b| b == b'\r')
                            .next()
                            .map(|l| String::from_utf8_lossy(l).to_string())
                            .unwrap_or_default();
                        let body = routes
                            .iter()
                            .find(|(k, _)| line.contains(k.as_str()))
                            .map(|(_, v)| v.clone());
                        let resp = match body {
                            Some(b) => format!(
                                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\nconnection: close\r\ncontent-length: {}\r\n\r\n{}",
                                b.len(),
                                b
                            ),
                            None => "HTTP/1.1 404 Not Found\r\nconnection: close\r\ncontent-length: 0\r\n\r\n"
                                .to_string(),
                        };
                        sock.write_all(resp.as_bytes()).ok();
                    }
                    Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                        thread::sleep(Duration::from_millis(5));
                    }
                    Err(_) => break,
                }
            }
        });
        TestHttpServer {
            base_url: format!("http://{}", addr),
            stop,
            handle: Some(handle),
        }
    }
}

fn request_complete(buf: &[u8]) -> bool {
    let Some(head_end) = buf.windows(4).position(|w| w == b"\r\n\r\n") else {
        return false;
    };
    let head = String::from_utf8_lossy(&buf[..head_end]);
    let clen = head
        .lines()
        .find_map(|l| {
            let (k, v) = l.split_once(':')?;
            if k.eq_ignore_ascii_case("content-length") {
                v.trim().parse::<usize>().ok()
            } else {
                None
            }
        })
        .unwrap_or(0);
    buf.len() >= head_end + 4 + clen
}

impl Drop for TestHttpServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            h.join().ok();
        }
    }
}

/// Split an expression into model-sized pieces: identifier/number runs stay
/// whole, every other byte stands alone.
pub fn expr_chunks(expr: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut run = String::new();
    for ch in expr.chars() {
        if ch.is_ascii_alphanumeric() || ch == '_' {
            run.push(ch);
        } else {
            if !run.is_empty() {
                out.push(std::mem::take(&mut run));
            }
            out.push(ch.to_string());
        }
    }
    if !run.is_empty() {
        out.push(run);
    }
    out
}

/// Build a scripted-model JSON that walks every instance through a short
/// reasoning trace with two delimited windows and then stops. `final_override`
/// swaps the second window's interior for selected instances (by index), for
/// baselines that are supposed to produce malformed answers.
pub fn build_suite_script(
    instances: &[gramdec::eval::TaskInstance],
    final_override: &HashMap<usize, String>,
) -> String {
    let mut tokens: Vec<String> = vec![String::new()];
    let mut ids: HashMap<String, u32> = HashMap::new();
    let mut entries: Vec<serde_json::Value> = Vec::new();
    let intern = |tokens: &mut Vec<String>, ids: &mut HashMap<String, u32>, s: &str| -> u32 {
        if let Some(&id) = ids.get(s) {
            return id;
        }
        let id = tokens.len() as u32;
        tokens.push(s.to_string());
        ids.insert(s.to_string(), id);
        id
    };
    for (i, inst) in instances.iter().enumerate() {
        let final_answer = final_override
            .get(&i)
            .cloned()
            .unwrap_or_else(|| inst.ground_truth.clone());
        let mut chunks: Vec<String> = vec![
            "Let's think step by step. ".into(),
            "The quantity is ".into(),
            "<<".into(),
        ];
        chunks.extend(expr_chunks(&inst.ground_truth));
        chunks.extend([">>".into(), ". ".into(), "The final answer is ".into(), "<<".into()]);
        chunks.extend(expr_chunks(&final_answer));
        chunks.extend([">>".into(), ".".into()]);

        intern(&mut tokens, &mut ids, &inst.prompt);
        if let Some(nc) = &inst.prompt_no_cot {
            intern(&mut tokens, &mut ids, nc);
        }
        let mut prefix = inst.prompt.clone();
        for chunk in &chunks {
            let id = intern(&mut tokens, &mut ids, chunk);
            entries.push(serde_json::json!({"suffix": prefix, "next_token": id}));
            prefix.push_str(chunk);
        }
        entries.push(serde_json::json!({"suffix": prefix, "next_token": 0}));
    }
    serde_json::json!({"tokens": tokens, "eos_id": 0, "entries": entries}).to_string()
}
