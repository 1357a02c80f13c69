import logging


LOG_FORMAT = "%(levelname)s [%(name)s] %(message)s"


class ConsoleNotificationHandler(logging.Handler):
    """ Handler forwarding netflow log records to the command output. """

    def __init__(self, format=LOG_FORMAT):
        super().__init__()
        self.output = None
        self.setFormatter(logging.Formatter(format))

    def set_output(self, output):
        self.output = output

    def emit(self, record):
        if not self.output:
            return
        self.output(self.format(record).rstrip("\n"))


notification_handler = ConsoleNotificationHandler()


def install(output, level="WARNING"):
    """ Route the `netflow` logger to `output` at `level`. """
    logger = logging.getLogger("netflow")
    notification_handler.set_output(output)
    notification_handler.setLevel(level)
    if notification_handler not in logger.handlers:
        logger.addHandler(notification_handler)
    logger.setLevel(level)
    logger.propagate = False
    return notification_handler
