"""Dataset file formats.

Paired data: UTF-8 text, one utterance per line, ``frames<TAB>transcript``
with each side a space-separated list of integer ids (the transcript side
may be empty). Text-only corpora carry just the transcript ids, no TAB;
an empty line is an empty transcript. Frame times are 1-based in the data
model; files simply list observation ids in frame order.
"""

from __future__ import annotations

from .core import Utterance


def format_paired_line(utt: Utterance) -> str:
    frames = " ".join(str(x) for x in utt.frames)
    transcript = " ".join(str(s) for s in utt.transcript)
    return f"{frames}\t{transcript}"


def write_paired(path, utterances) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for utt in utterances:
            fh.write(format_paired_line(utt) + "\n")


def read_paired(path, domain_tag: str) -> list[Utterance]:
    utterances = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'frames<TAB>transcript'")
            frames = tuple(int(x) for x in parts[0].split())
            transcript = tuple(int(s) for s in parts[1].split())
            utterances.append(Utterance(frames, transcript, domain_tag))
    if not utterances:
        raise ValueError(f"{path}: no utterances")
    return utterances


def write_text(path, transcripts) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for w in transcripts:
            fh.write(" ".join(str(s) for s in w) + "\n")


def read_text(path) -> list[tuple[int, ...]]:
    transcripts = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if "\t" in line:
                raise ValueError(f"{path}:{lineno}: text corpus must not contain tabs")
            transcripts.append(tuple(int(s) for s in line.split()))
    if not transcripts:
        raise ValueError(f"{path}: no transcripts")
    return transcripts


def read_transcripts(path) -> list[tuple[int, ...]]:
    """Transcripts from either a paired (.tsv-style) or text-only corpus."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    if "\t" in first:
        return [utt.transcript for utt in read_paired(path, "target")]
    return read_text(path)
