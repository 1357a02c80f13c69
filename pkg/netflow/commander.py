import logging

from .commands import CommandExit, UnsupportedCommand
from .errors import NetflowError


log = logging.getLogger(__name__)


def peek(list):
    if list:
        return list[0]
    return None


class Commander:
    def __init__(self, top_command, output) -> None:
        self.top_command = top_command
        self.output = output

    def __call__(self, words) -> int:
        words = list(words)
        try:
            return self.handle_command(words[:])
        except UnsupportedCommand:
            self.output("Unsupported command: " + " ".join(words))
            return 2
        except CommandExit as e:
            return e.status
        except NetflowError as e:
            self.output(f"Error {e}")
            return 1
        except Exception as e:
            log.debug("unexpected failure", exc_info=True)
            self.output(f"Error: {e}")
            return 1

    def find(self, handler, word):
        """ exact name first, then the first command the word is a prefix of """
        for c in handler.sub_commands():
            if c.name.lower() == word.lower():
                return c
        for c in handler.sub_commands():
            if c.name.lower().startswith(word.lower()):
                return c
        return None

    def handle_command(self, words) -> int:
        handler = self.top_command
        possible_command = peek(words)
        while possible_command:
            found = self.find(handler, possible_command)
            if found is None:
                break
            handler = found
            _ = words.pop(0)
            possible_command = peek(words)
        return handler.handle(words)
