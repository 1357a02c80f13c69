class NetflowError(Exception):
    """ Base class for every error raised by a netflow module. """

    module = "netflow"

    def __str__(self):
        return f"[{self.module}] {super().__str__()}"
