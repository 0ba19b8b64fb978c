#  Copyright (c) 2023. DataRobot, Inc. and its affiliates.
#  All rights reserved.
#  This is proprietary source code of DataRobot, Inc. and its affiliates.
#  Released under the terms of DataRobot Tool and Utility Agreement.

"""A module that contains conversion classes."""

import re

from common.constants import MODEL_FLOAT_DIGITS
from common.exceptions import UnexpectedInput


class FloatConvertor:
    """
    A float convertor. Floats are persisted as decimal strings with enough significant digits
    to be read back bit-exactly.
    """

    FLOAT_PATTERN = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")

    @staticmethod
    def to_text(value, digits=MODEL_FLOAT_DIGITS):
        """
        Convert a float into its persisted textual representation.

        Parameters
        ----------
        value : float
            The value to convert.
        digits : int
            The number of significant digits.

        Returns
        -------
        str,
            The textual representation.
        """

        return f"{float(value):.{digits}g}"

    @classmethod
    def to_float(cls, text, field_name="value"):
        """
        Convert a textual value into a float. Values of type int or float are assumed to be
        converted already.

        Parameters
        ----------
        text : str or int or float
            The value to convert.
        field_name : str
            The name of the field, which is used in the error message.

        Returns
        -------
        float,
            The converted value.
        """

        if isinstance(text, bool):
            raise UnexpectedInput(f"The {field_name} value is not a number: {text}")
        if isinstance(text, (int, float)):
            return float(text)
        stripped = str(text).strip()
        if not cls.FLOAT_PATTERN.match(stripped):
            raise UnexpectedInput(f"The {field_name} value is not a number: '{text}'")
        return float(stripped)

    @classmethod
    def to_int(cls, text, field_name="value"):
        """
        Convert a textual value into an integer, accepting only whole numbers.

        Parameters
        ----------
        text : str or int
            The value to convert.
        field_name : str
            The name of the field, which is used in the error message.

        Returns
        -------
        int,
            The converted value.
        """

        if isinstance(text, bool):
            raise UnexpectedInput(f"The {field_name} value is not an integer: {text}")
        if isinstance(text, int):
            return text
        stripped = str(text).strip()
        if not re.match(r"^[+-]?\d+$", stripped):
            raise UnexpectedInput(f"The {field_name} value is not an integer: '{text}'")
        return int(stripped)
