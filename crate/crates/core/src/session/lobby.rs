use std::collections::{BTreeMap, HashMap};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::clock::Millis;
use crate::content::PresetRoom;
use crate::protocol::Role;

use super::room::{Room, RoomConfig, RoomCredentials};
use super::state::{EventRecord, InviteCode, Participant};
use super::SessionError;

pub const DEFAULT_MAX_ROOMS: usize = 256;
const ROOM_ID_ALPHABET: &[u8; 32] = b"abcdefghijkmnpqrstuvwxyz23456789";
const ROOM_ID_LEN: usize = 10;

/// Mints room ids, admin tokens and invite codes, and keeps live codes
/// unique across rooms.
#[derive(Debug)]
pub struct CodeBook {
    rng: ChaCha20Rng,
    codes: HashMap<InviteCode, String>,
    tokens: HashMap<String, String>,
}

impl CodeBook {
    /// Seeded from the operating system's entropy source.
    pub fn new() -> Self {
        Self::from_rng(ChaCha20Rng::from_os_rng())
    }

    /// Deterministic codes for tests and replays. Never use in production.
    pub fn with_seed(seed: u64) -> Self {
        Self::from_rng(ChaCha20Rng::seed_from_u64(seed))
    }

    fn from_rng(rng: ChaCha20Rng) -> Self {
        Self { rng, codes: HashMap::new(), tokens: HashMap::new() }
    }

    pub fn allocate(&mut self) -> RoomCredentials {
        let room_id: String = (0..ROOM_ID_LEN)
            .map(|_| ROOM_ID_ALPHABET[self.rng.random_range(0..ROOM_ID_ALPHABET.len())] as char)
            .collect();
        let mut token = [0u8; 16];
        self.rng.fill_bytes(&mut token);
        let admin_token = hex::encode(token);
        let vr_code = self.fresh_code(&room_id);
        let guest_code = self.fresh_code(&room_id);
        self.tokens.insert(admin_token.clone(), room_id.clone());
        RoomCredentials { room_id, admin_token, vr_code, guest_code }
    }

    fn fresh_code(&mut self, room_id: &str) -> InviteCode {
        loop {
            let code = InviteCode::generate(&mut self.rng);
            if !self.codes.contains_key(&code) {
                self.codes.insert(code.clone(), room_id.to_owned());
                return code;
            }
        }
    }

    pub fn release(&mut self, room_id: &str) {
        self.codes.retain(|_, r| r != room_id);
        self.tokens.retain(|_, r| r != room_id);
    }

    /// Room an invite code or admin token belongs to.
    pub fn lookup(&self, code: &str) -> Option<&str> {
        self.room_for_token(code).or_else(|| self.room_for_invite(code))
    }

    pub fn room_for_invite(&self, code: &str) -> Option<&str> {
        InviteCode::parse(code).and_then(|c| self.codes.get(&c)).map(String::as_str)
    }

    pub fn room_for_token(&self, token: &str) -> Option<&str> {
        self.tokens.get(token.trim()).map(String::as_str)
    }
}

impl Default for CodeBook {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LobbyConfig {
    pub max_rooms: usize,
    pub room: RoomConfig,
}

impl Default for LobbyConfig {
    fn default() -> Self {
        Self { max_rooms: DEFAULT_MAX_ROOMS, room: RoomConfig::default() }
    }
}

/// All live rooms of one server.
#[derive(Debug)]
pub struct Lobby {
    codes: CodeBook,
    rooms: BTreeMap<String, Room>,
    config: LobbyConfig,
}

impl Lobby {
    pub fn new(config: LobbyConfig) -> Self {
        Self::with_codebook(config, CodeBook::new())
    }

    pub fn with_codebook(config: LobbyConfig, codes: CodeBook) -> Self {
        Self { codes, rooms: BTreeMap::new(), config }
    }

    pub fn config(&self) -> LobbyConfig {
        self.config
    }

    pub fn create_room(&mut self, preset: Option<&PresetRoom>, now: Millis) -> Result<RoomCredentials, SessionError> {
        if self.rooms.len() >= self.config.max_rooms {
            return Err(SessionError::ServerFull);
        }
        let credentials = self.codes.allocate();
        let room = Room::open(credentials.clone(), preset, self.config.room, now);
        self.rooms.insert(credentials.room_id.clone(), room);
        Ok(credentials)
    }

    pub fn room(&self, room_id: &str) -> Option<&Room> {
        self.rooms.get(room_id)
    }

    pub fn room_mut(&mut self, room_id: &str) -> Option<&mut Room> {
        self.rooms.get_mut(room_id)
    }

    pub fn rooms(&self) -> impl Iterator<Item = &Room> {
        self.rooms.values()
    }

    pub fn len(&self) -> usize {
        self.rooms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rooms.is_empty()
    }

    /// Resolves the room from the code when `room_id` is absent. Admin
    /// tokens are only accepted together with their room id.
    pub fn find_room(&self, room_id: Option<&str>, code: &str) -> Result<&str, SessionError> {
        match room_id {
            Some(id) => self.rooms.get_key_value(id).map(|(k, _)| k.as_str()).ok_or(SessionError::BadCode),
            None => self.codes.room_for_invite(code).ok_or(SessionError::BadCode),
        }
    }

    pub fn join(
        &mut self,
        room_id: Option<&str>,
        code: &str,
        display_name: &str,
        now: Millis,
    ) -> Result<(String, Participant, EventRecord), SessionError> {
        let id = self.find_room(room_id, code)?.to_owned();
        let room = self.rooms.get_mut(&id).ok_or(SessionError::BadCode)?;
        let (participant, record) = room.join(code, display_name, now)?;
        Ok((id, participant, record))
    }

    /// Removes closed rooms and rooms whose Admin grace ran out. Returns the
    /// ids of removed rooms with the closing event, if one was produced now.
    pub fn sweep(&mut self, now: Millis) -> Vec<(String, Option<EventRecord>)> {
        let mut removed = Vec::new();
        for (id, room) in self.rooms.iter_mut() {
            let closing = room.expire(now);
            if room.state().is_closed() {
                removed.push((id.clone(), closing));
            }
        }
        for (id, _) in &removed {
            self.remove_room(id);
        }
        removed
    }

    pub fn remove_room(&mut self, room_id: &str) -> Option<Room> {
        self.codes.release(room_id);
        self.rooms.remove(room_id)
    }

    /// Codes are released with the room, so this also answers whether a
    /// code is live.
    pub fn code_role(&self, code: &str) -> Option<(String, Role)> {
        let id = self.codes.lookup(code)?;
        let role = self.rooms.get(id)?.role_for_code(code)?;
        Some((id.to_owned(), role))
    }
}
