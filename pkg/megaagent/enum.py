from enum import Enum
from functools import lru_cache
from typing import List, TypeVar

ET = TypeVar("ET")


class MegaAgentEnum(Enum):
    """Base class for all MegaAgent enumerations.

    Values are the strings written to event logs, scenario files and reports.
    """

    def __str__(self) -> str:
        return str(self.value)

    @classmethod
    @lru_cache()
    def from_string(cls, value: str, ignore_case=False):
        """Convert a string value to enumeration value.

        Args:
            value: value to convert.
            ignore_case: ignore enumeration values case.
        Return:
            Enumeration value.
        """
        try:
            return cls(value)
        except ValueError as exp:
            if not ignore_case:
                raise exp from None

            for member in cls:
                if str(member.value).lower() == value.lower():
                    return member

            raise exp from None

    @classmethod
    def values(cls) -> List[str]:
        """String values of all members, in declaration order."""
        return [str(member.value) for member in cls]
