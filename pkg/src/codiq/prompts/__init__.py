"""Prompt template assets and single-slot substitution.

Templates are plain UTF-8 text shipped with the package and overridable by
path. They contain literal JSON braces, so substitution is a plain string
replacement of the ``{slot}`` token — never ``str.format``. Lines starting
with ``#:`` are template comments and are stripped before use.
"""

from __future__ import annotations

from importlib import resources

from ..errors import ConfigError

TEMPLATE_FILES = {
    "ranking": "ranking.txt",
    "solvability": "solvability.txt",
    "upgrade_direct": "upgrade_direct.txt",
    "upgrade_codiq": "upgrade_codiq.txt",
    "answer_judge": "answer_judge.txt",
}


def load_template(name: str, override_path: str | None = None) -> str:
    """Return the template text, preferring ``override_path`` when given."""
    if override_path is not None:
        try:
            with open(override_path, encoding="utf-8") as fh:
                raw = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read template override {override_path}: {exc}") from exc
    else:
        if name not in TEMPLATE_FILES:
            raise ConfigError(f"unknown template {name!r}")
        raw = resources.files(__package__).joinpath(TEMPLATE_FILES[name]).read_text("utf-8")
    lines = [line for line in raw.splitlines() if not line.startswith("#:")]
    return "\n".join(lines).strip("\n") + "\n"


def render(template: str, slot: str, value: str) -> str:
    """Substitute ``value`` into the ``{slot}`` marker of ``template``."""
    marker = "{" + slot + "}"
    if marker not in template:
        raise ConfigError(f"template has no {marker} slot")
    return template.replace(marker, value)
