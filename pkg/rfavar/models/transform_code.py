from enum import IntEnum


class TransformCode(IntEnum):
    LEVEL = 1  # no transformation
    DIFF = 2  # first difference
    DIFF2 = 3  # second difference
    LOG = 4  # natural log
    LOG_DIFF = 5  # first difference of log
    LOG_DIFF2 = 6  # second difference of log

    @property
    def diff_order(self) -> int:
        return {1: 0, 2: 1, 3: 2, 4: 0, 5: 1, 6: 2}[self.value]

    @property
    def uses_log(self) -> bool:
        return self.value >= 4
