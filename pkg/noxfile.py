import nox

PYTHONS = ("3.9", "3.10", "3.11", "3.12", "3.13")
DEV_DEPS = (
    "pytest>=8.3.5",
    "pytest-timeout>=2.4.0",
)

nox.options.default_venv_backend = "uv"
nox.options.sessions = ("tests", "lint")


def _install_package(session: nox.Session) -> None:
    session.install(*DEV_DEPS)
    session.install("-e", ".")


def _run_pytest(session: nox.Session, *extra: str) -> None:
    args = session.posargs or ["-q", "tests", *extra]
    session.run("pytest", *args)


@nox.session(python=PYTHONS)
def tests(session: nox.Session) -> None:
    _install_package(session)
    _run_pytest(session)


@nox.session(name="tests-slow", python="3.12")
def tests_slow(session: nox.Session) -> None:
    _install_package(session)
    _run_pytest(session, "--runslow")


@nox.session(python="3.12")
def lint(session: nox.Session) -> None:
    session.install("ruff>=0.13.3")
    session.run("ruff", "check", "impactopt", "tests", "benchmarks")
