// Bridge to model servers running as a child process.
//
// The child reads one JSON request per line on stdin and writes one JSON
// response per line on stdout:
//   QA:     {"context": .., "question": ..} -> {"span_text", "char_start", "answer_score", "no_answer_score"}
//   prompt: {"prompt": ..}                  -> {"text": ..}
// Requests are serialized through a mutex; the child lives as long as the
// model value.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{PromptModel, QAModel, QaOutput};
use crate::error::{Error, Result};

struct Channel {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl Channel {
    fn spawn(command: &[String]) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::InvalidArgument("empty exec command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::backend(format!("cannot start `{program}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Channel { child, stdin, stdout })
    }

    fn call<Req: Serialize, Resp: for<'de> Deserialize<'de>>(&mut self, req: &Req) -> Result<Resp> {
        let line = serde_json::to_string(req).expect("request serializes");
        writeln!(self.stdin, "{line}")
            .and_then(|_| self.stdin.flush())
            .map_err(|e| Error::Transport(format!("writing to model process: {e}")))?;
        let mut reply = String::new();
        let n = self
            .stdout
            .read_line(&mut reply)
            .map_err(|e| Error::Transport(format!("reading from model process: {e}")))?;
        if n == 0 {
            return Err(Error::Transport("model process closed its output".into()));
        }
        serde_json::from_str(&reply).map_err(|e| Error::backend(format!("bad reply {:?}: {e}", reply.trim_end())))
    }
}

impl Drop for Channel {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[derive(Serialize)]
struct QaRequest<'a> {
    context: &'a str,
    question: &'a str,
}

pub struct ExecQaModel {
    command: Vec<String>,
    channel: Mutex<Channel>,
}

impl ExecQaModel {
    pub fn spawn(command: Vec<String>) -> Result<Self> {
        let channel = Channel::spawn(&command)?;
        Ok(ExecQaModel {
            command,
            channel: Mutex::new(channel),
        })
    }
}

impl QAModel for ExecQaModel {
    fn predict(&self, context: &str, question: &str) -> Result<QaOutput> {
        let mut channel = self.channel.lock().expect("exec channel poisoned");
        channel.call(&QaRequest { context, question })
    }

    fn fingerprint(&self) -> String {
        format!("exec:{}", self.command.join(" "))
    }
}

#[derive(Serialize)]
struct PromptRequest<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct PromptReply {
    text: String,
}

pub struct ExecPromptModel {
    command: Vec<String>,
    channel: Mutex<Channel>,
}

impl ExecPromptModel {
    pub fn spawn(command: Vec<String>) -> Result<Self> {
        let channel = Channel::spawn(&command)?;
        Ok(ExecPromptModel {
            command,
            channel: Mutex::new(channel),
        })
    }
}

impl PromptModel for ExecPromptModel {
    fn generate(&self, prompt: &str) -> Result<String> {
        let mut channel = self.channel.lock().expect("exec channel poisoned");
        channel.call::<_, PromptReply>(&PromptRequest { prompt }).map(|r| r.text)
    }

    fn fingerprint(&self) -> String {
        format!("exec:{}", self.command.join(" "))
    }
}
