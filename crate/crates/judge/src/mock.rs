//! A tiny local chat-completions server for tests and offline dry runs.
//!
//! Std-only HTTP/1.1, one thread per connection, `Connection: close` on
//! every response. The responder sees the request's messages and decides
//! the reply or an error status.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::Deserialize;
use serde_json::json;

use crate::ChatMessage;

pub enum MockReply {
    Content(String),
    Status(u16),
}

type Responder = dyn Fn(&[ChatMessage]) -> MockReply + Send + Sync;

#[derive(Deserialize)]
struct Body {
    messages: Vec<ChatMessage>,
}

pub struct MockServer {
    addr: SocketAddr,
    requests: Arc<AtomicUsize>,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start(responder: impl Fn(&[ChatMessage]) -> MockReply + Send + Sync + 'static) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let requests = Arc::new(AtomicUsize::new(0));
        let stop = Arc::new(AtomicBool::new(false));
        let responder: Arc<Responder> = Arc::new(responder);
        let accept = {
            let (requests, stop) = (requests.clone(), stop.clone());
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let (requests, responder) = (requests.clone(), responder.clone());
                    std::thread::spawn(move || {
                        requests.fetch_add(1, Ordering::SeqCst);
                        let _ = serve(stream, &*responder);
                    });
                }
            })
        };
        Ok(Self {
            addr,
            requests,
            stop,
            accept: Some(accept),
        })
    }

    /// Replies with fixed text to every request.
    pub fn constant(reply: &str) -> std::io::Result<Self> {
        let reply = reply.to_owned();
        Self::start(move |_| MockReply::Content(reply.clone()))
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}/v1/chat/completions", self.addr)
    }

    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

fn serve(stream: TcpStream, responder: &Responder) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut content_length = 0usize;
    let mut line = String::new();
    reader.read_line(&mut line)?;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 || line == "\r\n" || line == "\n" {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            if name.trim().eq_ignore_ascii_case("content-length") {
                content_length = value.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;

    let (status, payload) = match serde_json::from_slice::<Body>(&body) {
        Ok(b) => match responder(&b.messages) {
            MockReply::Content(text) => (
                200,
                json!({
                    "id": "mock",
                    "object": "chat.completion",
                    "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
                })
                .to_string(),
            ),
            MockReply::Status(code) => (code, json!({"error": {"message": "mock failure"}}).to_string()),
        },
        Err(e) => (400, json!({"error": {"message": e.to_string()}}).to_string()),
    };
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} Mock\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    )?;
    stream.flush()
}
