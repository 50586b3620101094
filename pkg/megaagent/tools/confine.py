"""Confined program launcher, run as ``python confine.py PROGRAM``.

Runs ``PROGRAM`` as ``__main__`` with the current directory as its root.
Audit hooks refuse writes outside the root, reads outside the root and the
interpreter installation, and starting other processes. A refused operation
raises :class:`PermissionError` inside the program.

The launcher runs under the sandbox interpreter and imports nothing from
megaagent.
"""
import os
import runpy
import sys

_WRITE_FLAGS = os.O_WRONLY | os.O_RDWR | os.O_APPEND | os.O_CREAT | os.O_TRUNC

_SPAWN = frozenset(
    {
        "subprocess.Popen",
        "os.system",
        "os.exec",
        "os.posix_spawn",
        "os.spawn",
        "os.fork",
        "os.forkpty",
        "pty.spawn",
    }
)

_MUTATE = frozenset(
    {
        "os.remove",
        "os.rename",
        "os.rmdir",
        "os.mkdir",
        "os.chmod",
        "os.chown",
        "os.link",
        "os.symlink",
        "os.truncate",
        "os.utime",
        "shutil.rmtree",
    }
)

_LIST = frozenset({"os.listdir", "os.scandir"})


def _is_path(value) -> bool:
    return isinstance(value, (str, bytes, os.PathLike))


def _inside(path: str, roots) -> bool:
    return any(
        path == root or path.startswith(root.rstrip(os.sep) + os.sep)
        for root in roots
    )


def install(root: str) -> None:
    """Confine the running interpreter to ``root``."""
    root = os.path.realpath(root)
    system = {
        os.path.realpath(entry)
        for entry in (
            sys.prefix,
            sys.exec_prefix,
            sys.base_prefix,
            sys.base_exec_prefix,
            *sys.path,
        )
        if entry
    }
    writable = [root]
    readable = [root, *sorted(system), os.devnull]

    def check(event: str, path, roots) -> None:
        resolved = os.path.realpath(os.fsdecode(path))
        if not _inside(resolved, roots):
            raise PermissionError(f"sandbox: {event} on {resolved} is not allowed")

    def hook(event: str, args) -> None:
        if event in _SPAWN:
            raise PermissionError(f"sandbox: {event} is not allowed")
        if event == "open":
            path, mode, flags = args
            if not _is_path(path):
                return
            write = (isinstance(mode, str) and any(c in mode for c in "wax+")) or (
                isinstance(flags, int) and flags & _WRITE_FLAGS
            )
            check(event, path, writable if write else readable)
        elif event in _MUTATE:
            for arg in args:
                if _is_path(arg):
                    check(event, arg, writable)
        elif event == "os.chdir":
            if _is_path(args[0]):
                check(event, args[0], writable)
        elif event in _LIST:
            if args and _is_path(args[0]):
                check(event, args[0], readable)

    sys.addaudithook(hook)


def main() -> None:
    if len(sys.argv) != 2:
        sys.exit("usage: confine.py PROGRAM")
    if not hasattr(sys, "addaudithook"):
        sys.exit("sandbox: interpreter has no audit hooks")
    program = sys.argv[1]
    root = os.getcwd()
    sys.path[0] = root
    sys.argv = [program]
    sys.dont_write_bytecode = True
    install(root)
    runpy.run_path(program, run_name="__main__")


if __name__ == "__main__":
    main()
