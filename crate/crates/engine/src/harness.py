"""Runs one grading job against student code inside a scratch directory.

Invoked as ``python3 -s -B harness.py job.json``. Results go to the original
stdout as lines prefixed with the job nonce; anything the student prints is
redirected to stderr.
"""

import builtins
import json
import math
import os
import sys
import threading
import traceback

MAX_TEXT = 2000

with open(sys.argv[1], encoding="utf-8") as _f:
    _job = json.load(_f)
os.remove(sys.argv[1])
_scratch = os.path.realpath(_job["scratch"])
_marker = "@@AG:" + _job["nonce"] + "@@ "

_out = os.fdopen(os.dup(1), "w", encoding="utf-8", buffering=1)
os.dup2(2, 1)
sys.stdout = sys.stderr


def emit(obj):
    _out.write(_marker + json.dumps(obj, allow_nan=False) + "\n")
    _out.flush()


_guard = threading.local()
_WRITE_FLAGS = os.O_WRONLY | os.O_RDWR | os.O_CREAT | os.O_TRUNC | os.O_APPEND
_BLOCKED = (
    "subprocess.Popen",
    "os.system",
    "os.exec",
    "os.posix_spawn",
    "os.spawn",
    "os.fork",
    "os.forkpty",
    "os.kill",
    "os.killpg",
    "pty.spawn",
    "socket.connect",
    "socket.bind",
    "socket.sendto",
    "socket.getaddrinfo",
    "ctypes.dlopen",
    "ctypes.call_function",
)
_PATH_EVENTS = {
    "os.remove": (0,),
    "os.rmdir": (0,),
    "os.mkdir": (0,),
    "os.rename": (0, 1),
    "os.link": (0, 1),
    "os.symlink": (1,),
    "os.chmod": (0,),
    "os.chown": (0,),
    "os.truncate": (0,),
    "os.utime": (0,),
    "shutil.rmtree": (0,),
    "shutil.copyfile": (1,),
    "shutil.copytree": (1,),
    "shutil.move": (0, 1),
}


def _inside(path):
    if isinstance(path, int):
        return True
    try:
        p = os.fsdecode(path)
    except TypeError:
        return False
    if p == os.devnull:
        return True
    full = os.path.realpath(os.path.join(_scratch, p))
    return full == _scratch or full.startswith(_scratch + os.sep)


class Blocked(PermissionError):
    pass


def _hook(event, args):
    if getattr(_guard, "busy", False):
        return
    _guard.busy = True
    try:
        if event == "open":
            path, mode, flags = args
            writing = (mode is not None and any(c in mode for c in "wax+")) or (
                isinstance(flags, int) and flags & _WRITE_FLAGS
            )
            if writing and path is not None and not _inside(path):
                raise Blocked("write outside scratch directory: %r" % (path,))
        elif event in _PATH_EVENTS:
            for i in _PATH_EVENTS[event]:
                if i < len(args) and not _inside(args[i]):
                    raise Blocked("%s outside scratch directory: %r" % (event, args[i]))
        elif event.startswith(_BLOCKED):
            raise Blocked("%s is not permitted" % event)
    finally:
        _guard.busy = False


def _encode_float(x):
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def numeric(value, depth=0):
    if depth > 32:
        raise ValueError("nested too deeply")
    if isinstance(value, (str, bytes, dict, set, complex)):
        raise ValueError("not numeric")
    if hasattr(value, "tolist") and not isinstance(value, (list, tuple)):
        return numeric(value.tolist(), depth + 1)
    if isinstance(value, (list, tuple)):
        return [numeric(v, depth + 1) for v in value]
    return _encode_float(float(value))


def text(value):
    try:
        s = str(value)
    except BaseException as e:
        s = "<unprintable %s>" % type(e).__name__
    return s[:MAX_TEXT]


def describe(e):
    return ("%s: %s" % (type(e).__name__, e))[:MAX_TEXT]


def load_student(namespace):
    code = compile(_job["program"], "<submission>", "exec")
    exec(code, namespace)


def main():
    mode = _job["mode"]
    if mode == "syntax":
        try:
            compile(_job["program"], "<submission>", "exec")
            emit({"event": "syntax", "ok": True, "message": "", "line": None})
        except SyntaxError as e:
            emit({"event": "syntax", "ok": False, "message": describe(e), "line": e.lineno})
        return

    os.chdir(_scratch)
    sys.addaudithook(_hook)
    namespace = {"__name__": "__main__", "__builtins__": builtins}
    try:
        load_student(namespace)
        if _job.get("setup_code"):
            exec(compile(_job["setup_code"], "<setup>", "exec"), namespace)
    except BaseException as e:
        emit({"event": "crashed", "error": describe(e), "trace": traceback.format_exc()[-MAX_TEXT:]})
        return
    emit({"event": "loaded"})

    if mode == "tests":
        for t in _job["tests"]:
            rec = {"event": "test", "id": t["id"]}
            try:
                result = eval(t["call"], namespace)
                rec["text"] = text(result)
                if t.get("predicate") is not None:
                    scope = dict(namespace)
                    scope["result"] = result
                    rec["holds"] = bool(eval(t["predicate"], scope))
                try:
                    rec["numeric"] = numeric(result)
                except Exception:
                    rec["numeric"] = None
            except BaseException as e:
                rec = {"event": "test", "id": t["id"], "error": describe(e)}
            emit(rec)
    elif mode == "probe":
        for p in _job["probes"]:
            try:
                emit({"event": "probe", "id": p["id"], "text": text(eval(p["expression"], namespace))})
            except BaseException as e:
                emit({"event": "probe", "id": p["id"], "error": describe(e)})
    emit({"event": "done"})


main()
_out.flush()
os._exit(0)
