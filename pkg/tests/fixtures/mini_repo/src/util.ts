export function formatName(name: string): string {
  return name.trim();
}

const capitalize = (word: string): string => word.toUpperCase();
