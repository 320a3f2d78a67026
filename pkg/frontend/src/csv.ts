// Small RFC 4180 reader for table previews. Quoted fields may contain
// commas, doubled quotes, and line breaks; records end at LF, CR, or CRLF.
// Phenotype tables can run to thousands of rows, so previews are paged.

export interface CsvPage {
  header: string[];
  rows: string[][];
  /** Data rows in the file, not counting the header. */
  totalRows: number;
  truncated: boolean;
}

export const PREVIEW_ROW_LIMIT = 200;

export function parseCsv(text: string): string[][] {
  const records: string[][] = [];
  let record: string[] = [];
  let field = "";
  let inQuotes = false;
  let pendingField = false;

  for (let i = 0; i < text.length; i += 1) {
    const ch = text[i];
    if (inQuotes) {
      if (ch === '"') {
        if (text[i + 1] === '"') {
          field += '"';
          i += 1;
        } else {
          inQuotes = false;
        }
      } else {
        field += ch;
      }
      continue;
    }
    if (ch === '"') {
      inQuotes = true;
      pendingField = true;
      continue;
    }
    if (ch === ",") {
      record.push(field);
      field = "";
      pendingField = true;
      continue;
    }
    if (ch === "\n" || ch === "\r") {
      if (ch === "\r" && text[i + 1] === "\n") {
        i += 1;
      }
      record.push(field);
      records.push(record);
      record = [];
      field = "";
      pendingField = false;
      continue;
    }
    field += ch;
    pendingField = true;
  }
  if (pendingField || record.length > 0) {
    record.push(field);
    records.push(record);
  }
  return records;
}

export function csvPreview(text: string, limit = PREVIEW_ROW_LIMIT): CsvPage {
  const records = parseCsv(text);
  const header = records.length > 0 ? records[0] : [];
  const body = records.slice(1);
  return {
    header,
    rows: body.slice(0, limit),
    totalRows: body.length,
    truncated: body.length > limit,
  };
}
