//! A scripted, deterministic stand-in for the TLS handshake.
//!
//! It exchanges TLS-shaped messages (type byte, 24-bit length, body) so the
//! CRYPTO stream, flight sizes and key availability follow a real handshake,
//! but both peers derive secrets from a shared seed instead of performing a
//! key exchange. It authenticates nothing beyond the seed and exists for
//! the fault server and for tests.

use super::crypto::{hkdf_expand_label, hkdf_extract, hmac_sha256, sha256};
use super::provider::{CryptoOutput, HandshakeError, HandshakeProvider};
use super::{Direction, EncryptionLevel, KeyMaterial, LevelKeys};
use crate::wire::{put_varint, Reader};

const CLIENT_HELLO: u8 = 1;
const SERVER_HELLO: u8 = 2;
const NEW_SESSION_TICKET: u8 = 4;
const ENCRYPTED_EXTENSIONS: u8 = 8;
const CERTIFICATE: u8 = 11;
const CERTIFICATE_VERIFY: u8 = 15;
const FINISHED: u8 = 20;

const TICKET_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Client,
    Server,
}

#[derive(Debug, Clone)]
pub struct NullConfig {
    /// Both peers must share the seed to agree on keys.
    pub seed: u64,
    /// Encoded local transport parameters, sent verbatim.
    pub transport_parameters: Vec<u8>,
    /// Check the peer's CertificateVerify and Finished.
    pub verify_peer: bool,
    /// Client: distinguishes connections that share a seed.
    pub connection_nonce: Vec<u8>,
    /// Client: ticket from an earlier connection to resume with.
    pub ticket: Option<Vec<u8>>,
    /// Client: request 0-RTT when resuming.
    pub attempt_early_data: bool,
    /// Server: size of the Certificate message body.
    pub certificate_len: usize,
    pub issue_tickets: bool,
    pub accept_early_data: bool,
}

impl Default for NullConfig {
    fn default() -> Self {
        NullConfig {
            seed: 0,
            transport_parameters: Vec::new(),
            verify_peer: true,
            connection_nonce: Vec::new(),
            ticket: None,
            attempt_early_data: false,
            // Large enough that the server's first flight exceeds three
            // full-sized client Initials.
            certificate_len: 6000,
            issue_tickets: true,
            accept_early_data: true,
        }
    }
}

#[derive(Debug)]
pub struct NullHandshakeProvider {
    role: Role,
    config: NullConfig,
    started: bool,
    /// Next message type expected from the peer.
    expect: u8,
    recv: [Vec<u8>; 4],
    transcript: Vec<u8>,
    client_random: [u8; 32],
    shared: [u8; 32],
    handshake_secrets: Option<(Vec<u8>, Vec<u8>)>,
    exported: Vec<LevelKeys>,
    peer_tp: Option<Vec<u8>>,
    ticket_received: Option<Vec<u8>>,
    early_requested: bool,
    early_accepted: Option<bool>,
    complete: bool,
}

impl NullHandshakeProvider {
    pub fn new(role: Role, config: NullConfig) -> Self {
        NullHandshakeProvider {
            role,
            config,
            started: false,
            expect: match role {
                Role::Client => SERVER_HELLO,
                Role::Server => CLIENT_HELLO,
            },
            recv: Default::default(),
            transcript: Vec::new(),
            client_random: [0; 32],
            shared: [0; 32],
            handshake_secrets: None,
            exported: Vec::new(),
            peer_tp: None,
            ticket_received: None,
            early_requested: false,
            early_accepted: None,
            complete: false,
        }
    }

    pub fn client(config: NullConfig) -> Self {
        Self::new(Role::Client, config)
    }

    pub fn server(config: NullConfig) -> Self {
        Self::new(Role::Server, config)
    }

    pub fn role(&self) -> Role {
        self.role
    }

    fn salt(&self) -> Vec<u8> {
        let mut salt = b"quicprobe null handshake".to_vec();
        salt.extend_from_slice(&self.config.seed.to_be_bytes());
        salt
    }

    fn seeded(&self, label: &[u8], context: &[u8]) -> [u8; 32] {
        let mut input = self.config.seed.to_be_bytes().to_vec();
        input.extend_from_slice(label);
        input.extend_from_slice(context);
        sha256(&input)
    }

    fn ticket_for(&self, client_random: &[u8]) -> Vec<u8> {
        let id = &self.seeded(b"ticket id", client_random)[..16];
        let key = self.seeded(b"ticket key", &[]);
        let mut ticket = id.to_vec();
        ticket.extend_from_slice(&hmac_sha256(&key, id)[..16]);
        ticket
    }

    fn ticket_valid(&self, ticket: &[u8]) -> bool {
        if ticket.len() != TICKET_LEN {
            return false;
        }
        let key = self.seeded(b"ticket key", &[]);
        hmac_sha256(&key, &ticket[..16])[..16] == ticket[16..]
    }

    fn early_keys(&self, ticket: &[u8], client_hello: &[u8]) -> LevelKeys {
        let early = hkdf_extract(&self.salt(), ticket);
        let secret = hkdf_expand_label(&early, b"c e traffic", &sha256(client_hello), 32);
        level_keys(EncryptionLevel::ZeroRtt, &secret, &secret)
    }

    fn derive_handshake(&mut self, server_random: &[u8]) {
        let mut ikm = self.client_random.to_vec();
        ikm.extend_from_slice(server_random);
        let shared = hkdf_extract(&self.salt(), &ikm);
        let th = sha256(&self.transcript);
        let c = hkdf_expand_label(&shared, b"c hs traffic", &th, 32);
        let s = hkdf_expand_label(&shared, b"s hs traffic", &th, 32);
        self.exported.push(level_keys(EncryptionLevel::Handshake, &c, &s));
        self.handshake_secrets = Some((c, s));
        self.shared = shared;
    }

    fn derive_application(&mut self) {
        let th = sha256(&self.transcript);
        let c = hkdf_expand_label(&self.shared, b"c ap traffic", &th, 32);
        let s = hkdf_expand_label(&self.shared, b"s ap traffic", &th, 32);
        self.exported.push(level_keys(EncryptionLevel::OneRtt, &c, &s));
    }

    fn finished(&self, direction: Direction) -> Vec<u8> {
        let (c, s) = self.handshake_secrets.as_ref().expect("handshake secrets derived");
        let secret = match direction {
            Direction::Client => c,
            Direction::Server => s,
        };
        let key = hkdf_expand_label(secret, b"finished", &[], 32);
        hmac_sha256(&key, &sha256(&self.transcript)).to_vec()
    }

    fn certificate_verify(&self) -> Vec<u8> {
        let mut input = b"certificate verify".to_vec();
        input.extend_from_slice(&sha256(&self.transcript));
        sha256(&input).to_vec()
    }

    fn append(&mut self, out: &mut Vec<u8>, msg_type: u8, body: &[u8]) {
        let msg = message(msg_type, body);
        self.transcript.extend_from_slice(&msg);
        out.extend_from_slice(&msg);
    }

    fn client_handle(
        &mut self,
        level: EncryptionLevel,
        msg_type: u8,
        raw: &[u8],
        body: &[u8],
    ) -> Result<Vec<CryptoOutput>, HandshakeError> {
        let unexpected = HandshakeError::UnexpectedMessage { level, msg_type };
        match (level, msg_type) {
            (EncryptionLevel::Initial, SERVER_HELLO) if self.expect == SERVER_HELLO => {
                if body.len() != 32 {
                    return Err(HandshakeError::Malformed("ServerHello random"));
                }
                self.transcript.extend_from_slice(raw);
                self.derive_handshake(body);
                self.expect = ENCRYPTED_EXTENSIONS;
                Ok(Vec::new())
            }
            (EncryptionLevel::Handshake, ENCRYPTED_EXTENSIONS) if self.expect == msg_type => {
                let mut r = Reader::new(body);
                let tp_len = r.varint_len().map_err(|_| HandshakeError::Malformed("EE"))?;
                let tp = r.bytes(tp_len).map_err(|_| HandshakeError::Malformed("EE"))?.to_vec();
                let accepted = r.u8().map_err(|_| HandshakeError::Malformed("EE"))? == 1;
                self.peer_tp = Some(tp);
                if self.early_requested {
                    self.early_accepted = Some(accepted);
                }
                self.transcript.extend_from_slice(raw);
                self.expect = CERTIFICATE;
                Ok(Vec::new())
            }
            (EncryptionLevel::Handshake, CERTIFICATE) if self.expect == msg_type => {
                self.transcript.extend_from_slice(raw);
                self.expect = CERTIFICATE_VERIFY;
                Ok(Vec::new())
            }
            (EncryptionLevel::Handshake, CERTIFICATE_VERIFY) if self.expect == msg_type => {
                if self.config.verify_peer && body != self.certificate_verify() {
                    return Err(HandshakeError::VerificationFailed);
                }
                self.transcript.extend_from_slice(raw);
                self.expect = FINISHED;
                Ok(Vec::new())
            }
            (EncryptionLevel::Handshake, FINISHED) if self.expect == msg_type => {
                if self.config.verify_peer && body != self.finished(Direction::Server) {
                    return Err(HandshakeError::VerificationFailed);
                }
                self.transcript.extend_from_slice(raw);
                self.derive_application();
                let fin = self.finished(Direction::Client);
                let mut out = Vec::new();
                self.append(&mut out, FINISHED, &fin);
                self.complete = true;
                self.expect = NEW_SESSION_TICKET;
                Ok(vec![(EncryptionLevel::Handshake, out)])
            }
            (EncryptionLevel::OneRtt, NEW_SESSION_TICKET) if self.complete => {
                self.ticket_received = Some(body.to_vec());
                Ok(Vec::new())
            }
            _ => Err(unexpected),
        }
    }

    fn server_handle(
        &mut self,
        level: EncryptionLevel,
        msg_type: u8,
        raw: &[u8],
        body: &[u8],
    ) -> Result<Vec<CryptoOutput>, HandshakeError> {
        match (level, msg_type) {
            (EncryptionLevel::Initial, CLIENT_HELLO) if self.expect == CLIENT_HELLO => {
                let malformed = |_| HandshakeError::Malformed("ClientHello");
                let mut r = Reader::new(body);
                self.client_random.copy_from_slice(r.bytes(32).map_err(malformed)?);
                let tp_len = r.varint_len().map_err(malformed)?;
                self.peer_tp = Some(r.bytes(tp_len).map_err(malformed)?.to_vec());
                let ticket_len = r.varint_len().map_err(malformed)?;
                let ticket = r.bytes(ticket_len).map_err(malformed)?.to_vec();
                let wants_early = r.u8().map_err(malformed)? == 1;
                self.transcript.extend_from_slice(raw);

                if wants_early {
                    self.early_requested = true;
                    let ok = self.config.accept_early_data && self.ticket_valid(&ticket);
                    self.early_accepted = Some(ok);
                    if ok {
                        let keys = self.early_keys(&ticket, raw);
                        self.exported.push(keys);
                    }
                }

                let server_random = self.seeded(b"server random", &self.client_random);
                let mut initial = Vec::new();
                self.append(&mut initial, SERVER_HELLO, &server_random);
                self.derive_handshake(&server_random);

                let mut flight = Vec::new();
                let mut ee = Vec::new();
                put_varint(&mut ee, self.config.transport_parameters.len() as u64)
                    .expect("transport parameters fit a varint");
                ee.extend_from_slice(&self.config.transport_parameters);
                ee.push(u8::from(self.early_accepted == Some(true)));
                self.append(&mut flight, ENCRYPTED_EXTENSIONS, &ee);
                let cert = certificate_body(self.config.seed, self.config.certificate_len);
                self.append(&mut flight, CERTIFICATE, &cert);
                let cv = self.certificate_verify();
                self.append(&mut flight, CERTIFICATE_VERIFY, &cv);
                let fin = self.finished(Direction::Server);
                self.append(&mut flight, FINISHED, &fin);
                self.derive_application();
                self.expect = FINISHED;
                Ok(vec![(EncryptionLevel::Initial, initial), (EncryptionLevel::Handshake, flight)])
            }
            (EncryptionLevel::Handshake, FINISHED) if self.expect == FINISHED => {
                if self.config.verify_peer && body != self.finished(Direction::Client) {
                    return Err(HandshakeError::VerificationFailed);
                }
                self.transcript.extend_from_slice(raw);
                self.complete = true;
                self.expect = 0;
                if self.config.issue_tickets {
                    let ticket = self.ticket_for(&self.client_random);
                    Ok(vec![(EncryptionLevel::OneRtt, message(NEW_SESSION_TICKET, &ticket))])
                } else {
                    Ok(Vec::new())
                }
            }
            _ => Err(HandshakeError::UnexpectedMessage { level, msg_type }),
        }
    }
}

fn level_keys(level: EncryptionLevel, client: &[u8], server: &[u8]) -> LevelKeys {
    LevelKeys {
        level,
        client: KeyMaterial::from_secret(level, Direction::Client, client),
        server: KeyMaterial::from_secret(level, Direction::Server, server),
    }
}

fn message(msg_type: u8, body: &[u8]) -> Vec<u8> {
    let len = body.len() as u32;
    let mut out = Vec::with_capacity(4 + body.len());
    out.push(msg_type);
    out.extend_from_slice(&len.to_be_bytes()[1..]);
    out.extend_from_slice(body);
    out
}

fn certificate_body(seed: u64, len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len);
    let mut block = sha256(&seed.to_be_bytes());
    while out.len() < len {
        let take = (len - out.len()).min(32);
        out.extend_from_slice(&block[..take]);
        block = sha256(&block);
    }
    out
}

/// Splits one complete message off the front of `buf`.
fn take_message(buf: &mut Vec<u8>) -> Option<Vec<u8>> {
    if buf.len() < 4 {
        return None;
    }
    let len = usize::from(buf[1]) << 16 | usize::from(buf[2]) << 8 | usize::from(buf[3]);
    if buf.len() < 4 + len {
        return None;
    }
    let rest = buf.split_off(4 + len);
    Some(std::mem::replace(buf, rest))
}

impl HandshakeProvider for NullHandshakeProvider {
    fn set_transport_parameters(&mut self, encoded: Vec<u8>) {
        self.config.transport_parameters = encoded;
    }

    fn initiate(&mut self) -> Result<Vec<CryptoOutput>, HandshakeError> {
        self.started = true;
        if self.role == Role::Server {
            return Ok(Vec::new());
        }
        self.client_random = self.seeded(b"client random", &self.config.connection_nonce);
        let ticket = self.config.ticket.clone().unwrap_or_default();
        self.early_requested = self.config.attempt_early_data && !ticket.is_empty();
        let mut body = self.client_random.to_vec();
        put_varint(&mut body, self.config.transport_parameters.len() as u64)
            .expect("transport parameters fit a varint");
        body.extend_from_slice(&self.config.transport_parameters);
        put_varint(&mut body, ticket.len() as u64).expect("ticket fits a varint");
        body.extend_from_slice(&ticket);
        body.push(u8::from(self.early_requested));
        let mut out = Vec::new();
        self.append(&mut out, CLIENT_HELLO, &body);
        if self.early_requested {
            let keys = self.early_keys(&ticket, &out);
            self.exported.push(keys);
        }
        Ok(vec![(EncryptionLevel::Initial, out)])
    }

    fn consume(
        &mut self,
        level: EncryptionLevel,
        data: &[u8],
    ) -> Result<Vec<CryptoOutput>, HandshakeError> {
        if !self.started {
            return Err(HandshakeError::NotStarted);
        }
        self.recv[level.index()].extend_from_slice(data);
        let mut out = Vec::new();
        while let Some(raw) = take_message(&mut self.recv[level.index()]) {
            let msg_type = raw[0];
            let body = raw[4..].to_vec();
            let produced = match self.role {
                Role::Client => self.client_handle(level, msg_type, &raw, &body)?,
                Role::Server => self.server_handle(level, msg_type, &raw, &body)?,
            };
            out.extend(produced);
        }
        Ok(out)
    }

    fn exported_secrets(&mut self) -> Vec<LevelKeys> {
        std::mem::take(&mut self.exported)
    }

    fn peer_transport_parameters_raw(&self) -> Option<&[u8]> {
        self.peer_tp.as_deref()
    }

    fn resumption_ticket(&self) -> Option<Vec<u8>> {
        self.ticket_received.clone()
    }

    fn is_complete(&self) -> bool {
        self.complete
    }

    fn early_data_accepted(&self) -> Option<bool> {
        self.early_accepted
    }
}
