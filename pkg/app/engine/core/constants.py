from math import ceil, sqrt

# === 1. ПАРАМЕТРЫ ПРОТОКОЛА ПО УМОЛЧАНИЮ ===
DEFAULT_K = 32
DEFAULT_R = 40
DEFAULT_EPS = 0.125
DEFAULT_M_Y = 5
DEFAULT_M_S = 48
DEFAULT_SESSIONS = 1000
MIN_KEY_LENGTH = 8

# Noise rate is stored as parts-per-2^16
EPS_SCALE = 1 << 16
EPS_LIMIT = EPS_SCALE // 2

# Three-sigma margin for the default acceptance threshold
THRESHOLD_SIGMAS = 3.0

# === 2. ПАРТИИ (для выделения независимых RNG-потоков) ===
PARTY_READER = "reader"
PARTY_TAG = "tag"
PARTY_ADVERSARY = "adversary"
PARTY_KEYGEN = "keygen"

# === 3. СЦЕНАРИИ ЭКСПЕРИМЕНТОВ ===
SCENARIOS = (
    "honest",
    "coin-flip-adversary",
    "attack-y",
    "attack-s",
    "attack-full",
    "impersonate",
)
SWEEP_AXES = ("k", "r", "eps", "u", "m")

# === 4. ФРЕЙМЫ (netio) ===
FRAME_MAGIC = b"HHB1"
FRAME_HEADER_SIZE = 9
MAX_FRAME_PAYLOAD = 1 << 16
DEFAULT_IO_TIMEOUT = 10.0
LOOPBACK_HOST = "127.0.0.1"

FRAME_PARAMS = 0x01
FRAME_EXCHANGE = 0x02
FRAME_BLINDING = 0x03
FRAME_CHALLENGE = 0x04
FRAME_RESPONSE = 0x05
FRAME_DECISION = 0x06

FRAME_NAMES = {
    FRAME_PARAMS: "Params",
    FRAME_EXCHANGE: "Exchange",
    FRAME_BLINDING: "Blinding",
    FRAME_CHALLENGE: "Challenge",
    FRAME_RESPONSE: "Response",
    FRAME_DECISION: "Decision",
}

# === 5. КОДЫ ВЫХОДА CLI ===
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRANSPORT = 3

# Wilson score interval at 95%
WILSON_Z = 1.959963984540054


def default_threshold(r: int, eps: float) -> int:
    """u = ceil(eps*r + 3*sqrt(r*eps*(1-eps))), never below floor(eps*r)+1."""
    u = ceil(eps * r + THRESHOLD_SIGMAS * sqrt(r * eps * (1.0 - eps)))
    return max(u, int(eps * r) + 1)
