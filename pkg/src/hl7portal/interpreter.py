"""Protocol command parsing and execution against per-session state.

Each downstream client owns one Session.  Commands carry a Romanian and an
English alias (same behavior, same canonical id); responses are either a
data value, "OK", or "NOK" with the reason stored for ultimaEroare().
"""

from __future__ import annotations

import logging
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, NamedTuple

from .er7 import (
    DEFAULT_ENCODING,
    EmptyMessage,
    EncodingChars,
    Hl7Message,
    Hl7Segment,
    MalformedSegment,
)
from .lexicon import LanguagePack, RegistryHolder
from .mllp import (
    ConnectFailed,
    ConnectionLost,
    ExchangeTimeout,
    FrameTooLarge,
    UpstreamConnection,
    UpstreamEndpoint,
    connect_upstream,
)

logger = logging.getLogger(__name__)

OK = "OK"
NOK = "NOK"

# Canonical command ids.  The getters map 1:1 onto mapping-file entries.
CONNECT = "CONNECT"
USE_PATIENT = "USE_PATIENT"
LAST_ERROR = "LAST_ERROR"
DISCONNECT = "DISCONNECT"

GETTERS = (
    "EXTERNAL_ID",
    "INTERNAL_ID",
    "ALTERNATE_ID",
    "NAME",
    "MOTHER_MAIDEN_NAME",
    "DATE_OF_BIRTH",
    "SEX",
    "RACE",
    "ADDRESS",
    "COUNTRY_CODE",
    "HOME_PHONE",
    "BUSINESS_PHONE",
    "PRIMARY_LANGUAGE",
    "MARITAL_STATUS",
    "RELIGION",
    "ACCOUNT_NUMBER",
    "CNP",
    "DRIVERS_LICENSE",
    "ETHNIC_GROUP",
    "BIRTH_PLACE",
    "CITIZENSHIP",
    "NATIONALITY",
)

# Romanian/English alias pairs; both spellings are first-class.
ALIASES = {
    "conectare": CONNECT,
    "login": CONNECT,
    "utilizarePacient": USE_PATIENT,
    "usePatient": USE_PATIENT,
    "idExternPacient": "EXTERNAL_ID",
    "getExternalID": "EXTERNAL_ID",
    "idInternPacient": "INTERNAL_ID",
    "getInternalID": "INTERNAL_ID",
    "idAlternativPacient": "ALTERNATE_ID",
    "getAlternateID": "ALTERNATE_ID",
    "nume": "NAME",
    "getName": "NAME",
    "numeFataMama": "MOTHER_MAIDEN_NAME",
    "getMotherMaidenName": "MOTHER_MAIDEN_NAME",
    "dataNasterii": "DATE_OF_BIRTH",
    "getDateOfBirth": "DATE_OF_BIRTH",
    "sex": "SEX",
    "getSex": "SEX",
    "rasa": "RACE",
    "getRace": "RACE",
    "adresa": "ADDRESS",
    "getAddress": "ADDRESS",
    "codulTarii": "COUNTRY_CODE",
    "getCountryCode": "COUNTRY_CODE",
    "numarTelefon": "HOME_PHONE",
    "getHomePhoneNumber": "HOME_PHONE",
    "numarTelefonServicii": "BUSINESS_PHONE",
    "getBusinessPhoneNumber": "BUSINESS_PHONE",
    "limbaNatala": "PRIMARY_LANGUAGE",
    "getPrimaryLanguage": "PRIMARY_LANGUAGE",
    "stareCivila": "MARITAL_STATUS",
    "getMaritalStatus": "MARITAL_STATUS",
    "religie": "RELIGION",
    "getReligion": "RELIGION",
    "numarContBancar": "ACCOUNT_NUMBER",
    "getAccountNumber": "ACCOUNT_NUMBER",
    "codNumericPersonal": "CNP",
    "getCNP": "CNP",
    "serieCarteIdentitate": "DRIVERS_LICENSE",
    "getDriversLicenseNumber": "DRIVERS_LICENSE",
    "minoritateaEtnica": "ETHNIC_GROUP",
    "getEthnicGroup": "ETHNIC_GROUP",
    "loculNasterii": "BIRTH_PLACE",
    "getBirthPlace": "BIRTH_PLACE",
    "cetatenie": "CITIZENSHIP",
    "getCitizenship": "CITIZENSHIP",
    "nationalitate": "NATIONALITY",
    "getNationality": "NATIONALITY",
    "ultimaEroare": LAST_ERROR,
    "getLastError": LAST_ERROR,
    # Added pair: explicit session teardown on request.
    "deconectare": DISCONNECT,
    "logout": DISCONNECT,
}


class CommandSyntaxError(ValueError):
    """The line does not match `name '(' args ')' [';']`."""


class CommandRequest(NamedTuple):
    name: str
    args: list[str]


_COMMAND = re.compile(
    r"^(?P<name>[A-Za-z_][A-Za-z0-9_]*)\((?P<args>[^()]*)\)\s*;?$"
)


def parse_command(line: str) -> CommandRequest:
    """Parse `name(arg, ...)[;]`; args are trimmed, names case-sensitive."""
    match = _COMMAND.match(line.strip())
    if not match:
        raise CommandSyntaxError(f"Cannot parse command: {line.strip()!r}")
    args_text = match.group("args")
    args = [] if args_text.strip() == "" else [a.strip() for a in args_text.split(",")]
    return CommandRequest(match.group("name"), args)


class MappingError(ValueError):
    """A mapping file is missing getters or maps outside PID."""


_MAPPING_TARGET = re.compile(r"^([A-Z][A-Z0-9]{2})-([0-9]+)$")


def load_mapping(path: str | Path) -> dict[str, tuple[str, int]]:
    """Read "CANONICAL=PID-<index>" lines into a getter-to-field table.

    Every getter must appear exactly once; every target must be a PID
    field with index >= 1.
    """
    entries: dict[str, tuple[str, int]] = {}
    path = Path(path)
    for line_no, raw in enumerate(path.read_text("ascii").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        name, eq, target = line.partition("=")
        name = name.strip()
        match = _MAPPING_TARGET.match(target.strip())
        if not eq or name not in GETTERS or not match:
            raise MappingError(f"{path.name}:{line_no}: bad mapping line {line!r}")
        if name in entries:
            raise MappingError(f"{path.name}:{line_no}: duplicate entry for {name}")
        segment, index = match.group(1), int(match.group(2))
        if segment != "PID" or index < 1:
            raise MappingError(f"{path.name}:{line_no}: target must be PID-<n>: {line!r}")
        entries[name] = (segment, index)
    missing = [g for g in GETTERS if g not in entries]
    if missing:
        raise MappingError(f"{path.name}: no entry for {', '.join(missing)}")
    return entries


def mapping_path(selector: str) -> Path:
    """Resolve "standard"/"simopac" to the packaged file, else a path."""
    if selector in ("standard", "simopac"):
        from importlib.resources import files

        return Path(str(files("hl7portal") / "data" / "mappings" / f"{selector}.map"))
    return Path(selector)


def packaged_languages_dir() -> Path:
    from importlib.resources import files

    return Path(str(files("hl7portal") / "data" / "languages"))


@dataclass
class Session:
    """Per-client mutable state; confined to one server thread."""

    id: str
    language: str | None = None
    upstream: UpstreamConnection | None = None
    patient: Hl7Message | None = None
    last_error: str = ""
    authenticated: bool = False


class CommandOutcome(NamedTuple):
    response: str
    end_session: bool = False


# Used only when the registry has zero packs; real deployments always have
# at least one language, but errors still need wording.
_FALLBACK_PACK = LanguagePack(
    code="",
    display_name="",
    segment_lexicons={},
    code_tables={},
    files_not_found="HL7 files not found! Please choose another language!",
    none="None",
    not_present="No data available.",
)


def build_patient_query(
    cnp: str, user: str, password: str, control_id: str
) -> Hl7Message:
    """QBP-style patient lookup: MSH + QPD (the CNP) + RCP."""
    timestamp = time.strftime("%Y%m%d%H%M%S")
    msh = Hl7Segment.build_msh(
        "HL7PORTAL",
        "PORTAL",
        "",
        "",
        timestamp,
        f"{user}:{password}",
        ("QBP", "Q22"),
        control_id,
        "P",
        "2.3.1",
    )
    qpd = Hl7Segment.build("QPD", ("Q22", "Find Candidates"), control_id, cnp)
    rcp = Hl7Segment.build("RCP", "I", ("1", "RD"))
    return Hl7Message((msh, qpd, rcp))


class Interpreter:
    """Executes parsed commands; shared by all sessions, itself stateless
    apart from the swappable registry snapshot and the fixed mapping."""

    def __init__(
        self,
        registry: RegistryHolder,
        mapping: dict[str, tuple[str, int]],
        connect: Callable[[UpstreamEndpoint], UpstreamConnection] = connect_upstream,
        upstream_timeout_ms: int = 5000,
    ):
        self._registry = registry
        self._mapping = mapping
        self._connect = connect
        self._upstream_timeout_ms = upstream_timeout_ms

    def handle_line(self, session: Session, line: str) -> CommandOutcome:
        """Execute one command line; always returns exactly one response."""
        try:
            request = parse_command(line)
        except CommandSyntaxError as e:
            session.last_error = str(e)
            return CommandOutcome(NOK)
        canonical = ALIASES.get(request.name)
        if canonical is None:
            session.last_error = f"Unknown command: {request.name}"
            return CommandOutcome(NOK)
        if canonical == CONNECT:
            return CommandOutcome(self._connect_cmd(session, request))
        if canonical == USE_PATIENT:
            return CommandOutcome(self._use_patient(session, request))
        if canonical == DISCONNECT:
            if not self._expect_args(session, request, 0):
                return CommandOutcome(NOK)
            if session.upstream is not None:
                session.upstream.close()
                session.upstream = None
            return CommandOutcome(OK, end_session=True)
        if not self._expect_args(session, request, 0):
            return CommandOutcome(NOK)
        if canonical == LAST_ERROR:
            return CommandOutcome(session.last_error or self._pack(session).none)
        return CommandOutcome(self._getter(session, canonical))

    def _pack(self, session: Session) -> LanguagePack:
        """The session's pack; the default one before a language is set."""
        registry = self._registry.get()
        pack = None
        if session.language is not None:
            pack = registry.pack(session.language)
        if pack is None:
            pack = registry.default_pack()
        return pack if pack is not None else _FALLBACK_PACK

    def _expect_args(self, session: Session, request: CommandRequest, count: int) -> bool:
        if len(request.args) == count:
            return True
        session.last_error = (
            f"{request.name} expects {count} argument(s), got {len(request.args)}"
        )
        return False

    def _connect_cmd(self, session: Session, request: CommandRequest) -> str:
        if not self._expect_args(session, request, 4):
            return NOK
        host, port_text, user, password = request.args
        try:
            endpoint = UpstreamEndpoint(
                host, int(port_text), user, password, self._upstream_timeout_ms
            )
        except ValueError:
            session.last_error = f"Invalid port argument: {port_text!r}"
            return NOK
        try:
            upstream = self._connect(endpoint)
        except ConnectFailed as e:
            session.last_error = f"Connection failed: {e}"
            return NOK
        if session.upstream is not None:
            session.upstream.close()
        session.upstream = upstream
        session.authenticated = True
        return OK

    def _use_patient(self, session: Session, request: CommandRequest) -> str:
        if not self._expect_args(session, request, 2):
            return NOK
        cnp, language = request.args
        if not cnp:
            session.last_error = "CNP must be non-empty"
            return NOK
        registry = self._registry.get()
        if language not in registry.packs:
            # A language dropped into the directory since startup should
            # work without a restart: reload once before giving up.
            registry = self._registry.reload()
        if language not in registry.packs:
            default = registry.default_pack() or _FALLBACK_PACK
            session.last_error = default.files_not_found
            return NOK
        session.language = language
        pack = registry.packs[language]
        if session.upstream is None:
            session.last_error = "Not connected to an HL7 server"
            return NOK
        query = build_patient_query(
            cnp,
            session.upstream.endpoint.user,
            session.upstream.endpoint.password,
            session.upstream.next_control_id(),
        )
        try:
            response = session.upstream.exchange(query)
        except (
            ExchangeTimeout,
            ConnectionLost,
            FrameTooLarge,
            MalformedSegment,
            EmptyMessage,
            OSError,
        ) as e:
            logger.warning("session %s: patient query failed: %s", session.id, e)
            session.last_error = pack.not_present
            return NOK
        if response.segment("PID") is None:
            session.last_error = pack.not_present
            return NOK
        session.patient = response
        return OK

    def _getter(self, session: Session, canonical: str) -> str:
        pack = self._pack(session)
        if session.patient is None:
            session.last_error = pack.not_present
            return NOK
        segment, index = self._mapping[canonical]
        value = session.patient.field_value(segment, index)
        if value is None:
            session.last_error = pack.not_present
            return NOK
        return value


def interpret_segment(
    seg: Hl7Segment, pack: LanguagePack, enc: EncodingChars = DEFAULT_ENCODING
) -> list[str]:
    """Render a segment as "Label: value" lines in the pack's language.

    No lexicon file for the segment: one line, the files-not-found string.
    Present-but-empty fields render the none-string, indices beyond the
    segment's last field the not-present-string.  MSH-9 codes are expanded
    through the pack's code tables.
    """
    lexicon = pack.segment_lexicons.get(seg.name)
    if lexicon is None:
        return [pack.files_not_found]
    lines = []
    for index in sorted(lexicon):
        text = seg.field_text(index, enc)
        if text is None:
            value = pack.not_present
        elif text == "":
            value = pack.none
        elif seg.name == "MSH" and index == 9:
            value = _describe_message_type(seg, pack, enc)
        else:
            value = text
        lines.append(f"{lexicon[index]}: {value}")
    return lines


def _describe_message_type(seg: Hl7Segment, pack: LanguagePack, enc: EncodingChars) -> str:
    text = seg.field_text(9, enc) or ""
    components = [comp[0] for comp in seg.field(9)[0] if comp]
    descriptions = []
    if len(components) >= 1:
        found = pack.code_lookup("MSH-MessageType", components[0])
        if found:
            descriptions.append(found)
    if len(components) >= 2:
        found = pack.code_lookup("MSH-EventType", components[1])
        if found:
            descriptions.append(found)
    if not descriptions:
        return text
    return f"{text} ({', '.join(descriptions)})"
