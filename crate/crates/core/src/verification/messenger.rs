//! Delivery of verification codes.
//!
//! # Outbox format
//!
//! [`OutboxMessenger`] writes one file per message into its directory, named
//! `<unix-nanos>-<n>.eml`, with CRLF line endings:
//!
//! ```text
//! From: <sender>
//! To: <contact address>
//! Date: <RFC 2822 date>
//! Subject: Your verification code: 123456
//! MIME-Version: 1.0
//! Content-Type: text/plain; charset=utf-8
//!
//! <body>
//! ```

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use parking_lot::Mutex;

use crate::error::VerificationError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutgoingMessage {
    pub to: String,
    pub subject: String,
    pub body: String,
}

pub trait Messenger: Send + Sync {
    fn send(&self, message: &OutgoingMessage) -> Result<(), VerificationError>;
}

fn render_rfc5322(from: &str, message: &OutgoingMessage) -> String {
    let date = chrono::Utc::now().to_rfc2822();
    let mut out = format!(
        "From: {from}\r\nTo: {}\r\nDate: {date}\r\nSubject: {}\r\nMIME-Version: 1.0\r\nContent-Type: text/plain; charset=utf-8\r\n\r\n",
        message.to, message.subject
    );
    for line in message.body.lines() {
        out.push_str(line);
        out.push_str("\r\n");
    }
    out
}

fn header_safe(message: &OutgoingMessage) -> Result<(), VerificationError> {
    if [&message.to, &message.subject].iter().any(|h| h.contains(['\r', '\n'])) {
        return Err(VerificationError::Delivery("header contains a line break".into()));
    }
    Ok(())
}

/// Writes messages as files into a local directory.
#[derive(Debug)]
pub struct OutboxMessenger {
    dir: PathBuf,
    from: String,
    sequence: AtomicU64,
}

impl OutboxMessenger {
    pub fn new(dir: impl Into<PathBuf>, from: impl Into<String>) -> Self {
        OutboxMessenger { dir: dir.into(), from: from.into(), sequence: AtomicU64::new(0) }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl Messenger for OutboxMessenger {
    fn send(&self, message: &OutgoingMessage) -> Result<(), VerificationError> {
        header_safe(message)?;
        let fail = |e: std::io::Error| VerificationError::Delivery(e.to_string());
        std::fs::create_dir_all(&self.dir).map_err(fail)?;
        let nanos = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_nanos());
        let n = self.sequence.fetch_add(1, Ordering::Relaxed);
        let path = self.dir.join(format!("{nanos}-{n}.eml"));
        std::fs::write(path, render_rfc5322(&self.from, message)).map_err(fail)
    }
}

/// Plain SMTP submission (no TLS, no AUTH), for relays on a trusted network.
#[derive(Debug, Clone)]
pub struct SmtpMessenger {
    server: String,
    from: String,
    helo: String,
    timeout: Duration,
}

impl SmtpMessenger {
    pub fn new(server: impl Into<String>, from: impl Into<String>) -> Self {
        SmtpMessenger {
            server: server.into(),
            from: from.into(),
            helo: "localhost".into(),
            timeout: Duration::from_secs(10),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn deliver(&self, message: &OutgoingMessage) -> std::io::Result<()> {
        let addr = self
            .server
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| std::io::Error::other("SMTP server address did not resolve"))?;
        let stream = TcpStream::connect_timeout(&addr, self.timeout)?;
        stream.set_read_timeout(Some(self.timeout))?;
        stream.set_write_timeout(Some(self.timeout))?;
        let mut reader = BufReader::new(stream.try_clone()?);
        let mut writer = stream;

        expect_reply(&mut reader, &[220])?;
        command(&mut writer, &mut reader, &format!("HELO {}", self.helo), &[250])?;
        command(&mut writer, &mut reader, &format!("MAIL FROM:<{}>", self.from), &[250])?;
        command(&mut writer, &mut reader, &format!("RCPT TO:<{}>", message.to), &[250, 251])?;
        command(&mut writer, &mut reader, "DATA", &[354])?;
        let mut data = String::new();
        for line in render_rfc5322(&self.from, message).split("\r\n") {
            if line.starts_with('.') {
                data.push('.');
            }
            data.push_str(line);
            data.push_str("\r\n");
        }
        data.push_str(".\r\n");
        writer.write_all(data.as_bytes())?;
        expect_reply(&mut reader, &[250])?;
        command(&mut writer, &mut reader, "QUIT", &[221])?;
        Ok(())
    }
}

fn command(writer: &mut TcpStream, reader: &mut impl BufRead, line: &str, ok: &[u16]) -> std::io::Result<()> {
    writer.write_all(line.as_bytes())?;
    writer.write_all(b"\r\n")?;
    expect_reply(reader, ok)
}

/// Reads a possibly multi-line reply and checks its code.
fn expect_reply(reader: &mut impl BufRead, ok: &[u16]) -> std::io::Result<()> {
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Err(std::io::Error::other("SMTP connection closed"));
        }
        let code: u16 = line
            .get(..3)
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| std::io::Error::other(format!("malformed SMTP reply {line:?}")))?;
        if line.as_bytes().get(3) == Some(&b'-') {
            continue;
        }
        if ok.contains(&code) {
            return Ok(());
        }
        return Err(std::io::Error::other(format!("SMTP server replied {}", line.trim_end())));
    }
}

impl Messenger for SmtpMessenger {
    fn send(&self, message: &OutgoingMessage) -> Result<(), VerificationError> {
        header_safe(message)?;
        self.deliver(message).map_err(|e| VerificationError::Delivery(e.to_string()))
    }
}

/// Keeps messages in memory; for tests and demos.
#[derive(Debug, Default)]
pub struct RecordingMessenger {
    sent: Mutex<Vec<OutgoingMessage>>,
    fail: std::sync::atomic::AtomicBool,
}

impl RecordingMessenger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sent(&self) -> Vec<OutgoingMessage> {
        self.sent.lock().clone()
    }

    pub fn last(&self) -> Option<OutgoingMessage> {
        self.sent.lock().last().cloned()
    }

    /// Makes subsequent sends fail (or succeed again).
    pub fn set_failing(&self, fail: bool) {
        self.fail.store(fail, Ordering::SeqCst);
    }
}

impl Messenger for RecordingMessenger {
    fn send(&self, message: &OutgoingMessage) -> Result<(), VerificationError> {
        if self.fail.load(Ordering::SeqCst) {
            return Err(VerificationError::Delivery("recording messenger set to fail".into()));
        }
        self.sent.lock().push(message.clone());
        Ok(())
    }
}
